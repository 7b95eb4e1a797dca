#pragma once

#include <iosfwd>
#include <optional>

#include <json.hpp>

#include "glosskit/baselines.hpp"
#include "glosskit/denoiser.hpp"
#include "glosskit/metrics.hpp"
#include "glosskit/pseudo_label.hpp"
#include "glosskit/toygen.hpp"
#include "glosskit/trainer.hpp"

namespace glosskit {

struct SplitSettings {
    std::vector<std::string> id_genres = {"story", "history"};
    std::vector<std::string> ood_genres = {"personal", "advice"};
    double train_frac = 0.7;
    double ood_eval_frac = 0.5;
    SplitPolicy policy = SplitPolicy::SentenceRandom;
};

struct DenoiseSettings {
    bool enabled = true;
    DenoiseMode mode = DenoiseMode::Unmasked;
    TrainConfig train = denoiser_train_defaults();
};

// One JSON file configures every command; flags override individual fields.
struct ExperimentConfig {
    std::string corpus_path;
    std::string workdir = "out";
    std::uint64_t seed = 1;
    SplitSettings split;
    EncoderConfig encoder;   // vocabulary sizes are filled in at run time
    TrainConfig pretrain;    // Table-style shared recipe
    TrainConfig finetune;    // defaults to the same hyperparameters
    MaskingPolicy masking;
    std::vector<double> sweep_weight_decays = {0.0, 0.01, 0.1, 0.5, 0.75, 1.0};
    DenoiseSettings denoise;
    PseudoLabelConfig pseudo;
    std::optional<ToySpec> toy;

    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_json_file(const std::string& path);
    nlohmann::json to_json() const;
    std::uint64_t config_hash() const;
    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// manifest-<command>.json under the workdir: enough to reproduce the run.
void write_manifest(const ExperimentConfig& cfg, const std::string& command);

struct SweepRow {
    double weight_decay = 0.0;
    double acc_eval_id = 0.0;
    double acc_eval_ood = 0.0;
};

// Fine-tunes the same pretrained checkpoint once per weight-decay value with
// an identical seed, so only the decay varies across rows.
std::vector<SweepRow> sweep_weight_decay(const EncoderParamsF& base,
                                         const std::vector<EncodedSentence>& train,
                                         const std::vector<EncodedSentence>& eval_id,
                                         const std::vector<EncodedSentence>& eval_ood,
                                         const std::vector<double>& values,
                                         const TrainConfig& finetune_cfg,
                                         const LogSink& log = {});

struct StageResult {
    std::string name;
    double acc_eval_id = 0.0;
    double acc_eval_ood = 0.0;
    double acc_test_ood = 0.0;
};

struct PipelineResult {
    std::vector<StageResult> stages; // baseline, weight_decay, denoised, pseudo_labeled
    nlohmann::json report;           // everything, as written to pipeline_report.json
};

// The staged experiment: baselines, MLM pretraining, the weight-decay sweep,
// OOV denoising, and iterative pseudo-labeling, each stage building on the
// last. The held-out test split is only read in the final evaluation block.
PipelineResult run_pipeline(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

} // namespace glosskit
