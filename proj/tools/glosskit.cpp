#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "glosskit/checkpoint.hpp"
#include "glosskit/experiment.hpp"

using namespace glosskit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Cli {
    std::string config_path;
    std::string workdir;
    std::string corpus;
    std::string spec_path;
    std::string format = "jsonl";
    std::string train_path, vocab_path, base_path, model_path, out_path, input_path;
    std::string eval_id_path, eval_ood_path, pool_path, report_path, denoiser_path;
    std::string denoise_flag = "off";
    std::string values_csv;
    double weight_decay = -1.0;
    std::int64_t seed = -1;

    ExperimentConfig load_config() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg = ExperimentConfig::from_json_file(config_path);
        if (!workdir.empty()) cfg.workdir = workdir;
        if (!corpus.empty()) cfg.corpus_path = corpus;
        if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
        return cfg;
    }

    std::string in_workdir(const ExperimentConfig& cfg, const std::string& explicit_path,
                           const char* name) const {
        if (!explicit_path.empty()) return explicit_path;
        return (fs::path(cfg.workdir) / name).string();
    }
};

CorpusFormat parse_format(const std::string& f) {
    if (f == "jsonl") return CorpusFormat::Jsonl;
    if (f == "twoline") return CorpusFormat::TwoLine;
    throw config_error("unknown corpus format '" + f + "'");
}

void check_vocab(const Checkpoint& ck, const Vocabulary& vocab, const std::string& what) {
    if (!ck.extras.contains("vocab_fingerprint")) return;
    if (ck.extras["vocab_fingerprint"].get<std::uint64_t>() != vocab.fingerprint())
        throw vocab_mismatch(what + " was trained with a different vocabulary");
}

LogSink file_log(std::ofstream& out, const std::string& phase) {
    return [&out, phase](const EpochLog& el) {
        json j{{"phase", phase}, {"epoch", el.epoch}, {"split", el.split},
               {"loss", el.loss},  {"lr", el.lr},     {"seconds", el.seconds}};
        if (el.accuracy) j["accuracy"] = *el.accuracy;
        out << j.dump() << "\n";
        out.flush();
    };
}

// Model predictions (optionally denoised) for a gold corpus file.
struct LoadedEval {
    Vocabulary vocab;
    std::vector<IgtSentence> corpus;
    std::vector<EncodedSentence> encoded;
    std::vector<Prediction> preds;
};

LoadedEval run_model(const Cli& cli, const ExperimentConfig& cfg) {
    LoadedEval le{Vocabulary::load(cli.in_workdir(cfg, cli.vocab_path, "vocab.json")), {}, {}, {}};
    auto model = load_checkpoint(cli.in_workdir(cfg, cli.model_path, "model.ckpt"));
    check_vocab(model, le.vocab, "model");
    le.corpus = load_corpus(cli.input_path, CorpusFormat::Jsonl);
    le.encoded = encode_corpus(le.corpus, le.vocab);
    le.preds = predict(model.params, le.encoded);
    if (cli.denoise_flag != "off") {
        auto den = load_checkpoint(cli.in_workdir(cfg, cli.denoiser_path, "denoiser.ckpt"));
        check_vocab(den, le.vocab, "denoiser");
        le.preds = denoise_predictions(le.preds, le.encoded,
                                       denoise_mode_from_string(cli.denoise_flag), den.params,
                                       le.vocab.gloss_count());
    }
    return le;
}

int dispatch(const std::string& command, const Cli& cli) {
    ExperimentConfig cfg = cli.load_config();
    fs::create_directories(cfg.workdir);

    if (command == "toygen") {
        ToySpec spec;
        if (!cli.spec_path.empty()) spec = ToySpec::from_json_file(cli.spec_path);
        else if (cfg.toy) spec = *cfg.toy;
        else throw config_error("toygen needs --spec or a 'toy' block in the config");
        auto corpus = generate_toy_corpus(spec, cfg.seed);
        const std::string out = cli.in_workdir(cfg, cli.out_path, "corpus.jsonl");
        save_corpus(corpus, out);
        write_manifest(cfg, command);
        std::cout << "wrote " << corpus.size() << " sentences to " << out << "\n";
        return 0;
    }

    if (command == "split") {
        if (cfg.corpus_path.empty()) throw config_error("split needs --corpus or config corpus");
        auto corpus = load_corpus(cfg.corpus_path, parse_format(cli.format));
        std::set<Genre> id_genres, ood_genres;
        for (const auto& g : cfg.split.id_genres) id_genres.insert(Genre::parse(g));
        for (const auto& g : cfg.split.ood_genres) ood_genres.insert(Genre::parse(g));
        auto splits = split_by_genre(corpus, id_genres, ood_genres, cfg.split.train_frac,
                                     cfg.split.ood_eval_frac, cfg.seed, cfg.split.policy);
        const fs::path wd(cfg.workdir);
        save_corpus(splits.train, (wd / "train.jsonl").string());
        save_corpus(splits.eval_id, (wd / "eval_id.jsonl").string());
        save_corpus(splits.eval_ood, (wd / "eval_ood.jsonl").string());
        save_corpus(splits.test_ood, (wd / "test_ood.jsonl").string());
        auto vocab = build_vocab(splits.train);
        vocab.save((wd / "vocab.json").string());
        write_manifest(cfg, command);
        std::cout << "train " << splits.train.size() << ", eval_id " << splits.eval_id.size()
                  << ", eval_ood " << splits.eval_ood.size() << ", test_ood "
                  << splits.test_ood.size() << "\n";
        return 0;
    }

    if (command == "pretrain" || command == "denoise") {
        auto vocab = Vocabulary::load(cli.in_workdir(cfg, cli.vocab_path, "vocab.json"));
        auto train_raw =
            load_corpus(cli.in_workdir(cfg, cli.train_path, "train.jsonl"), CorpusFormat::Jsonl);
        auto train_enc = encode_corpus(train_raw, vocab);
        std::ofstream log_out(fs::path(cfg.workdir) / "train_log.jsonl", std::ios::app);

        EncoderConfig enc_cfg = cfg.encoder;
        enc_cfg.input_vocab_size = vocab.morpheme_count();
        enc_cfg.label_vocab_size = vocab.gloss_count();

        if (command == "pretrain") {
            TrainConfig tc = cfg.pretrain;
            tc.seed = cfg.seed;
            auto params =
                pretrain_mlm(train_enc, tc, cfg.masking, enc_cfg, file_log(log_out, command));
            const std::string out = cli.in_workdir(cfg, cli.out_path, "mlm.ckpt");
            save_checkpoint(out, params, {{"vocab_fingerprint", vocab.fingerprint()}});
            json report{{"train_sentences", train_raw.size()}};
            for (const auto& [flag, name] :
                 {std::pair{&cli.eval_id_path, "eval_id"}, {&cli.eval_ood_path, "eval_ood"}}) {
                if (flag->empty()) continue;
                auto split_enc =
                    encode_corpus(load_corpus(*flag, CorpusFormat::Jsonl), vocab);
                report["perplexity"][name] =
                    perplexity(params, split_enc, cfg.masking, cfg.seed + 7);
            }
            std::ofstream rep(fs::path(cfg.workdir) / "pretrain_report.json");
            rep << report.dump(2) << "\n";
            write_manifest(cfg, command);
            std::cout << "wrote " << out << "\n";
            if (report.contains("perplexity")) std::cout << report["perplexity"].dump() << "\n";
        } else {
            TrainConfig tc = cfg.denoise.train;
            tc.seed = cfg.seed + 2;
            EncoderConfig geometry = cfg.encoder;
            geometry.label_vocab_size = vocab.gloss_count();
            auto params = train_denoiser(train_enc, tc, geometry, file_log(log_out, command));
            const std::string out = cli.in_workdir(cfg, cli.out_path, "denoiser.ckpt");
            save_checkpoint(out, params, {{"vocab_fingerprint", vocab.fingerprint()}});
            write_manifest(cfg, command);
            std::cout << "wrote " << out << "\n";
        }
        return 0;
    }

    if (command == "finetune") {
        auto vocab = Vocabulary::load(cli.in_workdir(cfg, cli.vocab_path, "vocab.json"));
        auto base = load_checkpoint(cli.in_workdir(cfg, cli.base_path, "mlm.ckpt"));
        check_vocab(base, vocab, "base checkpoint");
        auto train_raw =
            load_corpus(cli.in_workdir(cfg, cli.train_path, "train.jsonl"), CorpusFormat::Jsonl);
        auto train_enc = encode_corpus(train_raw, vocab);
        TrainConfig tc = cfg.finetune;
        tc.seed = cfg.seed + 1;
        if (cli.weight_decay >= 0.0) tc.weight_decay = cli.weight_decay;
        std::ofstream log_out(fs::path(cfg.workdir) / "train_log.jsonl", std::ios::app);
        auto model =
            train_classifier(base.params, train_enc, tc, file_log(log_out, command));
        const std::string out = cli.in_workdir(cfg, cli.out_path, "model.ckpt");
        save_checkpoint(out, model, {{"vocab_fingerprint", vocab.fingerprint()}});
        write_manifest(cfg, command);
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    if (command == "sweep-wd") {
        auto vocab = Vocabulary::load(cli.in_workdir(cfg, cli.vocab_path, "vocab.json"));
        auto base = load_checkpoint(cli.in_workdir(cfg, cli.base_path, "mlm.ckpt"));
        check_vocab(base, vocab, "base checkpoint");
        auto train_enc = encode_corpus(
            load_corpus(cli.in_workdir(cfg, cli.train_path, "train.jsonl"), CorpusFormat::Jsonl),
            vocab);
        auto eval_id_enc = encode_corpus(
            load_corpus(cli.in_workdir(cfg, cli.eval_id_path, "eval_id.jsonl"),
                        CorpusFormat::Jsonl),
            vocab);
        auto eval_ood_enc = encode_corpus(
            load_corpus(cli.in_workdir(cfg, cli.eval_ood_path, "eval_ood.jsonl"),
                        CorpusFormat::Jsonl),
            vocab);
        std::vector<double> values = cfg.sweep_weight_decays;
        if (!cli.values_csv.empty()) {
            values.clear();
            std::istringstream ss(cli.values_csv);
            std::string item;
            while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
        }
        TrainConfig tc = cfg.finetune;
        tc.seed = cfg.seed + 1;
        auto rows = sweep_weight_decay(base.params, train_enc, eval_id_enc, eval_ood_enc,
                                       values, tc);
        json arr = json::array();
        std::cout << "weight_decay  acc_eval_id  acc_eval_ood\n";
        for (const auto& r : rows) {
            arr.push_back(json{{"weight_decay", r.weight_decay},
                               {"acc_eval_id", r.acc_eval_id},
                               {"acc_eval_ood", r.acc_eval_ood}});
            std::cout << r.weight_decay << "  " << r.acc_eval_id << "  " << r.acc_eval_ood
                      << "\n";
        }
        std::ofstream out(fs::path(cfg.workdir) / "sweep_report.json");
        out << arr.dump(2) << "\n";
        write_manifest(cfg, command);
        return 0;
    }

    if (command == "predict") {
        auto le = run_model(cli, cfg);
        const std::string out_path = cli.in_workdir(cfg, cli.out_path, "predictions.jsonl");
        std::ofstream out(out_path);
        for (size_t i = 0; i < le.preds.size(); ++i) {
            const auto& p = le.preds[i];
            json row;
            row["doc"] = le.corpus[i].doc_id;
            row["index"] = le.corpus[i].index_in_doc;
            std::vector<std::string> glosses;
            std::vector<double> maxp;
            for (size_t t = 0; t < p.pred_ids.size(); ++t) {
                glosses.push_back(le.vocab.gloss(p.pred_ids[t]));
                maxp.push_back(*std::max_element(p.dist[t].begin(), p.dist[t].end()));
            }
            row["glosses"] = glosses;
            row["maxp"] = maxp;
            row["oov"] = std::vector<bool>(p.oov_mask.begin(), p.oov_mask.end());
            row["replaced"] = std::vector<bool>(p.replaced.begin(), p.replaced.end());
            row["confidence"] = p.confidence;
            out << row.dump() << "\n";
        }
        write_manifest(cfg, command);
        std::cout << "wrote " << le.preds.size() << " predictions to " << out_path << "\n";
        return 0;
    }

    if (command == "evaluate" || command == "oov-report") {
        auto le = run_model(cli, cfg);
        json report;
        if (command == "evaluate") {
            auto r = morpheme_accuracy(le.preds, le.encoded);
            report = r.to_json();
            std::cout << r.to_text() << "\n";
        } else {
            auto r = oov_report(le.preds, le.encoded);
            report = r.to_json();
            std::cout << r.to_text();
        }
        const std::string out = cli.in_workdir(
            cfg, cli.report_path,
            command == "evaluate" ? "eval_report.json" : "oov_report.json");
        std::ofstream rep(out);
        rep << report.dump(2) << "\n";
        write_manifest(cfg, command);
        return 0;
    }

    if (command == "pseudo-label") {
        auto vocab = Vocabulary::load(cli.in_workdir(cfg, cli.vocab_path, "vocab.json"));
        auto model = load_checkpoint(cli.in_workdir(cfg, cli.model_path, "model.ckpt"));
        check_vocab(model, vocab, "model");
        auto enc = [&](const std::string& path) {
            return encode_corpus(load_corpus(path, CorpusFormat::Jsonl), vocab);
        };
        auto train_enc = enc(cli.in_workdir(cfg, cli.train_path, "train.jsonl"));
        auto pool_enc = enc(cli.in_workdir(cfg, cli.pool_path, "eval_ood.jsonl"));
        auto eval_id_enc = enc(cli.in_workdir(cfg, cli.eval_id_path, "eval_id.jsonl"));
        auto eval_ood_enc = enc(cli.in_workdir(cfg, cli.eval_ood_path, "eval_ood.jsonl"));

        EncoderParamsF den;
        const EncoderParamsF* den_ptr = nullptr;
        if (cli.denoise_flag != "off") {
            auto ck = load_checkpoint(cli.in_workdir(cfg, cli.denoiser_path, "denoiser.ckpt"));
            check_vocab(ck, vocab, "denoiser");
            den = std::move(ck.params);
            den_ptr = &den;
        }
        TrainConfig tc = cfg.finetune;
        tc.seed = cfg.seed + 3;
        auto [best, reports] = run_pseudo_labeling(
            model.params, train_enc, pool_enc, eval_id_enc, eval_ood_enc, cfg.pseudo, tc,
            den_ptr,
            cli.denoise_flag == "off" ? cfg.denoise.mode
                                      : denoise_mode_from_string(cli.denoise_flag));
        const std::string out = cli.in_workdir(cfg, cli.out_path, "model_pseudo.ckpt");
        save_checkpoint(out, best, {{"vocab_fingerprint", vocab.fingerprint()}});
        std::ofstream it_out(fs::path(cfg.workdir) / "iterations.jsonl");
        for (const auto& r : reports) {
            json row{{"iteration", r.iteration},
                     {"selected_count", r.selected_count},
                     {"mean_confidence", r.mean_confidence},
                     {"acc_eval_id", r.acc_eval_id},
                     {"acc_eval_ood", r.acc_eval_ood}};
            it_out << row.dump() << "\n";
            std::cout << row.dump() << "\n";
        }
        write_manifest(cfg, command);
        std::cout << "wrote " << out << "\n";
        return 0;
    }

    if (command == "pipeline") {
        write_manifest(cfg, command);
        auto result = run_pipeline(cfg, &std::cerr);
        std::cout << "model            eval_id   eval_ood  test_ood\n";
        for (const auto& s : result.stages)
            std::cout << s.name << (s.name.size() < 16 ? std::string(16 - s.name.size(), ' ')
                                                       : " ")
                      << s.acc_eval_id << "  " << s.acc_eval_ood << "  " << s.acc_test_ood
                      << "\n";
        return 0;
    }

    throw config_error("unknown command " + command);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"glosskit: train and evaluate morpheme glossing models"};
    app.require_subcommand(1);
    Cli cli;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cli.config_path, "experiment config JSON");
        sub->add_option("--workdir", cli.workdir, "artifact directory (default: out)");
        sub->add_option("--seed", cli.seed, "seed override");
        return sub;
    };

    auto* toygen = add_common(app.add_subcommand("toygen", "generate a synthetic corpus"));
    toygen->add_option("--spec", cli.spec_path, "generator spec JSON");
    toygen->add_option("--out", cli.out_path, "output corpus path");

    auto* split = add_common(
        app.add_subcommand("split", "genre-based train/eval/test split plus vocabulary"));
    split->add_option("--corpus", cli.corpus, "corpus file");
    split->add_option("--format", cli.format, "jsonl or twoline");

    auto* pretrain = add_common(app.add_subcommand("pretrain", "masked-LM pretraining"));
    pretrain->add_option("--train", cli.train_path, "training split");
    pretrain->add_option("--vocab", cli.vocab_path, "vocabulary file");
    pretrain->add_option("--out", cli.out_path, "checkpoint output");
    pretrain->add_option("--eval-id", cli.eval_id_path, "report perplexity on this split");
    pretrain->add_option("--eval-ood", cli.eval_ood_path, "report perplexity on this split");

    auto* finetune =
        add_common(app.add_subcommand("finetune", "token-classification fine-tuning"));
    finetune->add_option("--base", cli.base_path, "pretrained checkpoint");
    finetune->add_option("--train", cli.train_path, "training split");
    finetune->add_option("--vocab", cli.vocab_path, "vocabulary file");
    finetune->add_option("--out", cli.out_path, "checkpoint output");
    finetune->add_option("--weight-decay", cli.weight_decay, "decoupled weight decay");

    auto* sweep = add_common(app.add_subcommand("sweep-wd", "weight-decay sweep"));
    sweep->add_option("--base", cli.base_path, "pretrained checkpoint");
    sweep->add_option("--train", cli.train_path, "training split");
    sweep->add_option("--eval-id", cli.eval_id_path, "ID eval split");
    sweep->add_option("--eval-ood", cli.eval_ood_path, "OOD eval split");
    sweep->add_option("--vocab", cli.vocab_path, "vocabulary file");
    sweep->add_option("--values", cli.values_csv, "comma-separated decay values");

    auto add_model_io = [&](CLI::App* sub) {
        sub->add_option("--model", cli.model_path, "classifier checkpoint");
        sub->add_option("--vocab", cli.vocab_path, "vocabulary file");
        sub->add_option("--input", cli.input_path, "gold corpus (jsonl)")->required();
        sub->add_option("--denoiser", cli.denoiser_path, "denoiser checkpoint");
        sub->add_option("--denoise", cli.denoise_flag, "off, masked, or unmasked");
        return sub;
    };
    auto* predict_cmd =
        add_model_io(add_common(app.add_subcommand("predict", "write predictions")));
    predict_cmd->add_option("--out", cli.out_path, "predictions output");
    auto* evaluate_cmd =
        add_model_io(add_common(app.add_subcommand("evaluate", "morpheme accuracy")));
    evaluate_cmd->add_option("--report", cli.report_path, "report output");
    auto* oov_cmd =
        add_model_io(add_common(app.add_subcommand("oov-report", "OOV error decomposition")));
    oov_cmd->add_option("--report", cli.report_path, "report output");

    auto* denoise = add_common(
        app.add_subcommand("denoise", "train the gloss-sequence denoiser MLM"));
    denoise->add_option("--train", cli.train_path, "training split");
    denoise->add_option("--vocab", cli.vocab_path, "vocabulary file");
    denoise->add_option("--out", cli.out_path, "checkpoint output");

    auto* pseudo = add_common(
        app.add_subcommand("pseudo-label", "confidence-ranked iterative pseudo-labeling"));
    pseudo->add_option("--model", cli.model_path, "starting classifier checkpoint");
    pseudo->add_option("--train", cli.train_path, "training split");
    pseudo->add_option("--pool", cli.pool_path, "unlabeled pool (default: eval_ood)");
    pseudo->add_option("--eval-id", cli.eval_id_path, "ID eval split");
    pseudo->add_option("--eval-ood", cli.eval_ood_path, "OOD eval split");
    pseudo->add_option("--vocab", cli.vocab_path, "vocabulary file");
    pseudo->add_option("--denoiser", cli.denoiser_path, "denoiser checkpoint");
    pseudo->add_option("--denoise", cli.denoise_flag, "off, masked, or unmasked");
    pseudo->add_option("--out", cli.out_path, "best checkpoint output");

    add_common(app.add_subcommand("pipeline", "run the full staged experiment"));
    app.get_subcommand("pipeline")->add_option("--corpus", cli.corpus, "corpus file");

    CLI11_PARSE(app, argc, argv);

    try {
        return dispatch(app.get_subcommands().front()->get_name(), cli);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::Config: return 1;
            case ErrorKind::Data: return 2;
            case ErrorKind::Runtime: return 3;
        }
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
