#include "glosskit/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "glosskit/checkpoint.hpp"
#include <glosskit/build_id.hpp>

namespace glosskit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

json train_config_to_json(const TrainConfig& cfg) {
    return json{{"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"epsilon", cfg.epsilon},
                {"weight_decay", cfg.weight_decay},
                {"learning_rate", cfg.learning_rate},
                {"warmup_frac", cfg.warmup_frac},
                {"batch_size", cfg.batch_size},
                {"grad_accum_steps", cfg.grad_accum_steps},
                {"epochs", cfg.epochs}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
    base.beta1 = j.value("beta1", base.beta1);
    base.beta2 = j.value("beta2", base.beta2);
    base.epsilon = j.value("epsilon", base.epsilon);
    base.weight_decay = j.value("weight_decay", base.weight_decay);
    base.learning_rate = j.value("learning_rate", base.learning_rate);
    base.warmup_frac = j.value("warmup_frac", base.warmup_frac);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.grad_accum_steps = j.value("grad_accum_steps", base.grad_accum_steps);
    base.epochs = j.value("epochs", base.epochs);
    return base;
}

namespace {

json toy_spec_to_json(const ToySpec& s) {
    return json{{"n_sentences", s.n_sentences},
                {"genre_weights", s.genre_weights},
                {"words_min", s.words_min},
                {"words_max", s.words_max},
                {"verb_weight", s.verb_weight},
                {"noun_weight", s.noun_weight},
                {"adv_weight", s.adv_weight},
                {"n_verb_stems", s.n_verb_stems},
                {"n_noun_stems", s.n_noun_stems},
                {"n_adv_stems", s.n_adv_stems},
                {"n_ambiguous_stems", s.n_ambiguous_stems},
                {"n_ood_stems_per_class", s.n_ood_stems_per_class},
                {"ambiguity_rate", s.ambiguity_rate},
                {"ood_vocab_shift", s.ood_vocab_shift},
                {"docs_per_genre", s.docs_per_genre}};
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.corpus_path = j.value("corpus", cfg.corpus_path);
    cfg.workdir = j.value("workdir", cfg.workdir);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("split")) {
        const auto& s = j["split"];
        cfg.split.id_genres = s.value("id_genres", cfg.split.id_genres);
        cfg.split.ood_genres = s.value("ood_genres", cfg.split.ood_genres);
        cfg.split.train_frac = s.value("train_frac", cfg.split.train_frac);
        cfg.split.ood_eval_frac = s.value("ood_eval_frac", cfg.split.ood_eval_frac);
        const std::string policy = s.value("policy", std::string("sentence"));
        if (policy == "sentence") cfg.split.policy = SplitPolicy::SentenceRandom;
        else if (policy == "document") cfg.split.policy = SplitPolicy::DocumentRandom;
        else throw config_error("unknown split policy '" + policy + "'");
    }
    if (j.contains("encoder")) cfg.encoder = encoder_config_from_json(j["encoder"]);
    if (j.contains("train")) {
        cfg.pretrain = train_config_from_json(j["train"], cfg.pretrain);
        cfg.finetune = train_config_from_json(j["train"], cfg.finetune);
    }
    if (j.contains("pretrain")) cfg.pretrain = train_config_from_json(j["pretrain"], cfg.pretrain);
    if (j.contains("finetune")) cfg.finetune = train_config_from_json(j["finetune"], cfg.finetune);
    if (j.contains("masking")) {
        const auto& m = j["masking"];
        cfg.masking.mask_prob = m.value("mask_prob", cfg.masking.mask_prob);
        cfg.masking.replace_mask = m.value("replace_mask", cfg.masking.replace_mask);
        cfg.masking.replace_random = m.value("replace_random", cfg.masking.replace_random);
        cfg.masking.keep_original = m.value("keep_original", cfg.masking.keep_original);
    }
    cfg.sweep_weight_decays =
        j.value("sweep_weight_decays", cfg.sweep_weight_decays);
    if (j.contains("denoise")) {
        const auto& d = j["denoise"];
        cfg.denoise.enabled = d.value("enabled", cfg.denoise.enabled);
        cfg.denoise.mode = denoise_mode_from_string(
            d.value("mode", denoise_mode_to_string(cfg.denoise.mode)));
        cfg.denoise.train = train_config_from_json(d, cfg.denoise.train);
    }
    if (j.contains("pseudo_label")) {
        const auto& p = j["pseudo_label"];
        cfg.pseudo.fraction = p.value("fraction", cfg.pseudo.fraction);
        cfg.pseudo.max_iterations = p.value("max_iterations", cfg.pseudo.max_iterations);
        cfg.pseudo.epochs = p.value("epochs", cfg.pseudo.epochs);
        cfg.pseudo.reinitialize = p.value("reinitialize", cfg.pseudo.reinitialize);
        cfg.pseudo.include_sep_in_confidence =
            p.value("include_sep_in_confidence", cfg.pseudo.include_sep_in_confidence);
    }
    if (j.contains("toy")) cfg.toy = ToySpec::from_json_text(j["toy"].dump());
    return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error("config file " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json ExperimentConfig::to_json() const {
    json j;
    j["corpus"] = corpus_path;
    j["workdir"] = workdir;
    j["seed"] = seed;
    j["split"] = json{{"id_genres", split.id_genres},
                      {"ood_genres", split.ood_genres},
                      {"train_frac", split.train_frac},
                      {"ood_eval_frac", split.ood_eval_frac},
                      {"policy", split.policy == SplitPolicy::SentenceRandom ? "sentence"
                                                                             : "document"}};
    j["encoder"] = encoder_config_to_json(encoder);
    j["pretrain"] = train_config_to_json(pretrain);
    j["finetune"] = train_config_to_json(finetune);
    j["masking"] = json{{"mask_prob", masking.mask_prob},
                        {"replace_mask", masking.replace_mask},
                        {"replace_random", masking.replace_random},
                        {"keep_original", masking.keep_original}};
    j["sweep_weight_decays"] = sweep_weight_decays;
    j["denoise"] = train_config_to_json(denoise.train);
    j["denoise"]["enabled"] = denoise.enabled;
    j["denoise"]["mode"] = denoise_mode_to_string(denoise.mode);
    j["pseudo_label"] = json{{"fraction", pseudo.fraction},
                             {"max_iterations", pseudo.max_iterations},
                             {"epochs", pseudo.epochs},
                             {"reinitialize", pseudo.reinitialize},
                             {"include_sep_in_confidence", pseudo.include_sep_in_confidence}};
    if (toy) j["toy"] = toy_spec_to_json(*toy);
    return j;
}

std::uint64_t ExperimentConfig::config_hash() const {
    // identifies the experiment itself; where artifacts land is not part of it
    json j = to_json();
    j.erase("workdir");
    const std::string text = j.dump();
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void ExperimentConfig::validate() const {
    pretrain.validate();
    finetune.validate();
    masking.validate();
    denoise.train.validate();
    pseudo.validate();
    if (toy) toy->validate();
    if (split.id_genres.empty() || split.ood_genres.empty())
        throw config_error("both genre sides must be non-empty");
    if (corpus_path.empty() && !toy)
        throw config_error("either a corpus path or a toy generator spec is required");
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command) {
    fs::create_directories(cfg.workdir);
    json m;
    m["command"] = command;
    m["config_hash"] = cfg.config_hash();
    m["seed"] = cfg.seed;
    m["build"] = kBuildId;
    m["threads"] = resolved_thread_count();
    std::ofstream out(fs::path(cfg.workdir) / ("manifest-" + command + ".json"));
    out << m.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Weight-decay sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> sweep_weight_decay(const EncoderParamsF& base,
                                         const std::vector<EncodedSentence>& train,
                                         const std::vector<EncodedSentence>& eval_id,
                                         const std::vector<EncodedSentence>& eval_ood,
                                         const std::vector<double>& values,
                                         const TrainConfig& finetune_cfg, const LogSink& log) {
    if (values.empty()) throw config_error("sweep needs at least one weight-decay value");
    std::vector<SweepRow> rows;
    for (double wd : values) {
        TrainConfig cfg = finetune_cfg; // same checkpoint and seed, only wd varies
        cfg.weight_decay = wd;
        auto model = train_classifier(base, train, cfg, log);
        SweepRow row;
        row.weight_decay = wd;
        row.acc_eval_id = morpheme_accuracy(predict(model, eval_id), eval_id).accuracy;
        row.acc_eval_ood = morpheme_accuracy(predict(model, eval_ood), eval_ood).accuracy;
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

namespace {

std::set<Genre> genre_set(const std::vector<std::string>& names) {
    std::set<Genre> out;
    for (const auto& n : names) out.insert(Genre::parse(n));
    return out;
}

LogSink jsonl_log_sink(std::ofstream& out, const std::string& phase) {
    return [&out, phase](const EpochLog& el) {
        json j;
        j["phase"] = phase;
        j["epoch"] = el.epoch;
        j["split"] = el.split;
        j["loss"] = el.loss;
        if (el.accuracy) j["accuracy"] = *el.accuracy;
        j["lr"] = el.lr;
        j["seconds"] = el.seconds;
        out << j.dump() << "\n";
        out.flush();
    };
}

struct EvalOutcome {
    double accuracy = 0.0;
    OovReport oov;
};

EvalOutcome evaluate_model(const EncoderParamsF& model,
                           const std::vector<EncodedSentence>& split,
                           const EncoderParamsF* denoiser, DenoiseMode mode) {
    auto preds = predict(model, split);
    if (denoiser)
        preds = denoise_predictions(preds, split, mode, *denoiser, model.cfg.label_vocab_size);
    EvalOutcome out;
    out.accuracy = morpheme_accuracy(preds, split).accuracy;
    out.oov = oov_report(preds, split);
    return out;
}

std::string stage_table(const std::vector<StageResult>& stages) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "Model" << std::right << std::setw(12) << "Eval (ID)"
       << std::setw(12) << "Eval (OOD)" << std::setw(12) << "Test (OOD)" << "\n";
    os << std::string(52, '-') << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& s : stages)
        os << std::left << std::setw(16) << s.name << std::right << std::setw(12)
           << s.acc_eval_id << std::setw(12) << s.acc_eval_ood << std::setw(12)
           << s.acc_test_ood << "\n";
    return os.str();
}

} // namespace

PipelineResult run_pipeline(const ExperimentConfig& cfg, std::ostream* progress) {
    cfg.validate();
    fs::create_directories(cfg.workdir);
    const fs::path workdir(cfg.workdir);
    auto note = [&](const std::string& msg) {
        if (progress) (*progress) << "[pipeline] " << msg << "\n" << std::flush;
    };
    std::ofstream train_log(workdir / "train_log.jsonl");

    // 1. corpus
    std::vector<IgtSentence> corpus;
    if (!cfg.corpus_path.empty()) {
        corpus = load_corpus(cfg.corpus_path, CorpusFormat::Jsonl);
        note("loaded corpus with " + std::to_string(corpus.size()) + " sentences");
    } else {
        corpus = generate_toy_corpus(*cfg.toy, cfg.seed);
        save_corpus(corpus, (workdir / "corpus.jsonl").string());
        note("generated toy corpus with " + std::to_string(corpus.size()) + " sentences");
    }

    // 2. splits and vocabulary
    Splits splits = split_by_genre(corpus, genre_set(cfg.split.id_genres),
                                   genre_set(cfg.split.ood_genres), cfg.split.train_frac,
                                   cfg.split.ood_eval_frac, cfg.seed, cfg.split.policy);
    save_corpus(splits.train, (workdir / "train.jsonl").string());
    save_corpus(splits.eval_id, (workdir / "eval_id.jsonl").string());
    save_corpus(splits.eval_ood, (workdir / "eval_ood.jsonl").string());
    save_corpus(splits.test_ood, (workdir / "test_ood.jsonl").string());
    Vocabulary vocab = build_vocab(splits.train);
    vocab.save((workdir / "vocab.json").string());
    note("split " + std::to_string(splits.train.size()) + "/" +
         std::to_string(splits.eval_id.size()) + "/" + std::to_string(splits.eval_ood.size()) +
         "/" + std::to_string(splits.test_ood.size()) + ", vocab " +
         std::to_string(vocab.morpheme_count()) + "/" + std::to_string(vocab.gloss_count()));

    const auto train_enc = encode_corpus(splits.train, vocab);
    const auto eval_id_enc = encode_corpus(splits.eval_id, vocab);
    const auto eval_ood_enc = encode_corpus(splits.eval_ood, vocab);

    json report;
    report["config_hash"] = cfg.config_hash();
    report["seed"] = cfg.seed;
    report["sizes"] = json{{"train", splits.train.size()},
                           {"eval_id", splits.eval_id.size()},
                           {"eval_ood", splits.eval_ood.size()},
                           {"test_ood", splits.test_ood.size()}};
    report["oov_rate"] = json{{"eval_id", oov_rate(eval_id_enc)},
                              {"eval_ood", oov_rate(eval_ood_enc)}};

    // 3. non-neural baselines
    auto lexicon = fit_lexicon(splits.train);
    {
        std::ofstream lex_out(workdir / "lexicon.json");
        lex_out << lexicon.to_json().dump() << "\n";
    }
    const auto mf_id =
        morpheme_accuracy(predict_most_frequent_corpus(lexicon, splits.eval_id, vocab),
                          eval_id_enc)
            .accuracy;
    const auto mf_ood =
        morpheme_accuracy(predict_most_frequent_corpus(lexicon, splits.eval_ood, vocab),
                          eval_ood_enc)
            .accuracy;
    const auto rnd_id = morpheme_accuracy(
                            predict_random_corpus(lexicon, splits.eval_id, vocab, cfg.seed + 101),
                            eval_id_enc)
                            .accuracy;
    const auto rnd_ood =
        morpheme_accuracy(
            predict_random_corpus(lexicon, splits.eval_ood, vocab, cfg.seed + 102),
            eval_ood_enc)
            .accuracy;
    report["baselines"] = json{{"most_frequent", {{"eval_id", mf_id}, {"eval_ood", mf_ood}}},
                               {"random", {{"eval_id", rnd_id}, {"eval_ood", rnd_ood}}}};
    note("baselines: most-frequent " + std::to_string(mf_ood) + " / random " +
         std::to_string(rnd_ood) + " on eval OOD");

    // 4. MLM pretraining
    EncoderConfig enc_cfg = cfg.encoder;
    enc_cfg.input_vocab_size = vocab.morpheme_count();
    enc_cfg.label_vocab_size = vocab.gloss_count();
    TrainConfig pre_cfg = cfg.pretrain;
    pre_cfg.seed = cfg.seed;
    auto mlm = pretrain_mlm(train_enc, pre_cfg, cfg.masking, enc_cfg,
                            jsonl_log_sink(train_log, "pretrain"));
    save_checkpoint((workdir / "mlm.ckpt").string(), mlm,
                    {{"vocab_fingerprint", vocab.fingerprint()}});
    report["perplexity"] =
        json{{"eval_id", perplexity(mlm, eval_id_enc, cfg.masking, cfg.seed + 7)},
             {"eval_ood", perplexity(mlm, eval_ood_enc, cfg.masking, cfg.seed + 7)}};
    note("pretrained MLM; perplexity ID " +
         std::to_string(report["perplexity"]["eval_id"].get<double>()) + " OOD " +
         std::to_string(report["perplexity"]["eval_ood"].get<double>()));

    // 5. weight-decay sweep (always includes 0 so the first row is the
    // plain fine-tuned baseline)
    std::vector<double> sweep_values = cfg.sweep_weight_decays;
    if (std::find(sweep_values.begin(), sweep_values.end(), 0.0) == sweep_values.end())
        sweep_values.insert(sweep_values.begin(), 0.0);
    TrainConfig ft_cfg = cfg.finetune;
    ft_cfg.seed = cfg.seed + 1;

    std::vector<SweepRow> sweep_rows;
    std::vector<EncoderParamsF> sweep_models;
    for (double wd : sweep_values) {
        TrainConfig one = ft_cfg;
        one.weight_decay = wd;
        auto model = train_classifier(mlm, train_enc, one,
                                      jsonl_log_sink(train_log, "finetune_wd" +
                                                                    std::to_string(wd)));
        SweepRow row;
        row.weight_decay = wd;
        row.acc_eval_id = morpheme_accuracy(predict(model, eval_id_enc), eval_id_enc).accuracy;
        row.acc_eval_ood =
            morpheme_accuracy(predict(model, eval_ood_enc), eval_ood_enc).accuracy;
        sweep_rows.push_back(row);
        sweep_models.push_back(std::move(model));
        note("fine-tuned wd=" + std::to_string(wd) + " eval OOD " +
             std::to_string(row.acc_eval_ood));
    }
    json sweep_json = json::array();
    for (const auto& r : sweep_rows)
        sweep_json.push_back(json{{"weight_decay", r.weight_decay},
                                  {"acc_eval_id", r.acc_eval_id},
                                  {"acc_eval_ood", r.acc_eval_ood}});
    report["sweep"] = sweep_json;
    {
        std::ofstream sweep_out(workdir / "sweep_report.json");
        sweep_out << sweep_json.dump(2) << "\n";
    }

    size_t baseline_idx = 0;
    for (size_t i = 0; i < sweep_values.size(); ++i)
        if (sweep_values[i] == 0.0) baseline_idx = i;
    size_t best_idx = 0;
    for (size_t i = 1; i < sweep_rows.size(); ++i)
        if (sweep_rows[i].acc_eval_ood > sweep_rows[best_idx].acc_eval_ood) best_idx = i;
    const EncoderParamsF& baseline_model = sweep_models[baseline_idx];
    const EncoderParamsF& wd_model = sweep_models[best_idx];
    report["best_weight_decay"] = sweep_rows[best_idx].weight_decay;
    save_checkpoint((workdir / "model_baseline.ckpt").string(), baseline_model,
                    {{"vocab_fingerprint", vocab.fingerprint()}});
    save_checkpoint((workdir / "model_wd.ckpt").string(), wd_model,
                    {{"vocab_fingerprint", vocab.fingerprint()}});

    // 6. denoiser
    const EncoderParamsF* denoiser_ptr = nullptr;
    EncoderParamsF denoiser;
    if (cfg.denoise.enabled) {
        TrainConfig den_cfg = cfg.denoise.train;
        den_cfg.seed = cfg.seed + 2;
        EncoderConfig den_geometry = cfg.encoder;
        den_geometry.label_vocab_size = vocab.gloss_count();
        denoiser = train_denoiser(train_enc, den_cfg, den_geometry,
                                  jsonl_log_sink(train_log, "denoiser"));
        save_checkpoint((workdir / "denoiser.ckpt").string(), denoiser,
                        {{"vocab_fingerprint", vocab.fingerprint()}});
        denoiser_ptr = &denoiser;

        const auto before = evaluate_model(wd_model, eval_ood_enc, nullptr, cfg.denoise.mode);
        const auto after =
            evaluate_model(wd_model, eval_ood_enc, denoiser_ptr, cfg.denoise.mode);
        report["denoise"] = json{{"mode", denoise_mode_to_string(cfg.denoise.mode)},
                                 {"eval_ood_before", before.accuracy},
                                 {"eval_ood_after", after.accuracy},
                                 {"oov_before", before.oov.to_json()},
                                 {"oov_after", after.oov.to_json()}};
        note("denoiser: eval OOD " + std::to_string(before.accuracy) + " -> " +
             std::to_string(after.accuracy));
    }

    // 7. pseudo-labeling from the best model so far, pool = OOD eval split
    TrainConfig pl_cfg = cfg.finetune;
    pl_cfg.weight_decay = sweep_rows[best_idx].weight_decay;
    pl_cfg.seed = cfg.seed + 3;
    auto [pseudo_model, iteration_reports] =
        run_pseudo_labeling(wd_model, train_enc, eval_ood_enc, eval_id_enc, eval_ood_enc,
                            cfg.pseudo, pl_cfg, denoiser_ptr, cfg.denoise.mode);
    save_checkpoint((workdir / "model_pseudo.ckpt").string(), pseudo_model,
                    {{"vocab_fingerprint", vocab.fingerprint()}});
    {
        std::ofstream it_out(workdir / "iterations.jsonl");
        json arr = json::array();
        for (const auto& r : iteration_reports) {
            json row{{"iteration", r.iteration},
                     {"selected_count", r.selected_count},
                     {"mean_confidence", r.mean_confidence},
                     {"acc_eval_id", r.acc_eval_id},
                     {"acc_eval_ood", r.acc_eval_ood}};
            it_out << row.dump() << "\n";
            arr.push_back(row);
        }
        report["iterations"] = arr;
    }
    note("pseudo-labeling done after " + std::to_string(iteration_reports.size() - 1) +
         " iterations");

    // 8. final evaluation; the held-out test split is touched only here
    const auto test_ood_enc = encode_corpus(splits.test_ood, vocab);
    std::vector<StageResult> stages(4);
    stages[0].name = "baseline";
    stages[1].name = "weight_decay";
    stages[2].name = "denoised";
    stages[3].name = "pseudo_labeled";
    const DenoiseMode mode = cfg.denoise.mode;
    auto fill = [&](StageResult& s, const EncoderParamsF& m, const EncoderParamsF* den) {
        s.acc_eval_id = evaluate_model(m, eval_id_enc, den, mode).accuracy;
        s.acc_eval_ood = evaluate_model(m, eval_ood_enc, den, mode).accuracy;
        s.acc_test_ood = evaluate_model(m, test_ood_enc, den, mode).accuracy;
    };
    fill(stages[0], baseline_model, nullptr);
    fill(stages[1], wd_model, nullptr);
    fill(stages[2], wd_model, denoiser_ptr);
    fill(stages[3], pseudo_model, denoiser_ptr);

    json stages_json = json::array();
    for (const auto& s : stages)
        stages_json.push_back(json{{"model", s.name},
                                   {"acc_eval_id", s.acc_eval_id},
                                   {"acc_eval_ood", s.acc_eval_ood},
                                   {"acc_test_ood", s.acc_test_ood}});
    report["stages"] = stages_json;

    {
        std::ofstream final_json(workdir / "final_report.json");
        final_json << stages_json.dump(2) << "\n";
        std::ofstream final_text(workdir / "final_report.txt");
        final_text << stage_table(stages);
        std::ofstream report_out(workdir / "pipeline_report.json");
        report_out << report.dump(2) << "\n";
    }
    note("wrote final report:\n" + stage_table(stages));

    PipelineResult result;
    result.stages = std::move(stages);
    result.report = std::move(report);
    return result;
}

} // namespace glosskit
