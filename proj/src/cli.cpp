#include <algorithm>
#include <sstream>

#include <CLI11.hpp>

#include "flamewatch/classifier.hpp"
#include "flamewatch/cli.hpp"
#include "flamewatch/corpus.hpp"
#include "flamewatch/embedding.hpp"
#include "flamewatch/error.hpp"
#include "flamewatch/fileio.hpp"
#include "flamewatch/flaming.hpp"
#include "flamewatch/json_io.hpp"
#include "flamewatch/lexicon.hpp"
#include "flamewatch/metrics.hpp"

namespace flamewatch {

namespace fs = std::filesystem;

namespace {

struct Globals {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string output_dir = ".";
    double z_threshold = 5.0;
    double share_threshold = 0.20;
    double window_hours = 3.0;
    std::string orientation = "standard";
    std::size_t max_n = kMaxPhraseTokens;
    bool strict_eq1 = false;
};

struct PreprocessArgs {
    std::string input, output;
};

struct LabelArgs {
    std::string input, lexicon, emoji, output;
};

struct EmbedArgs {
    std::string input, output;
    std::string method = "word2vec";
    EmbedConfig config;
    SubwordConfig subword;
};

struct TrainClfArgs {
    std::string input, embeddings, output;
    int filters = 64;
    int kernel = 3;
    TrainOptions train;
    ModelConfig model;
};

struct PredictArgs {
    std::string model, embeddings, input, output;
};

struct EvaluateArgs {
    std::string matrix, model, embeddings, input, output;
};

struct DetectArgs {
    std::string input;
    std::string bucket = "day";
    bool sample_sigma = false;
    bool include_negative = false;
};

fs::path output_path(const Globals& g, const std::string& explicit_path, const char* default_name) {
    if (!explicit_path.empty()) return explicit_path;
    return fs::path(g.output_dir) / default_name;
}

void ensure_parent(const fs::path& p) {
    const auto parent = p.parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

nlohmann::json distribution_json(const std::array<std::size_t, kNumClasses>& d) {
    nlohmann::json j = nlohmann::json::object();
    for (std::size_t c = 0; c < kNumClasses; ++c) j[std::string(label_name(label_from_code(static_cast<int>(c))))] = d[c];
    return j;
}

std::unique_ptr<EmbeddingMatrix> maybe_embeddings(const std::string& path) {
    if (path.empty()) return nullptr;
    return std::make_unique<EmbeddingMatrix>(load_embeddings(path));
}

nlohmann::json cmd_preprocess(const Globals& g, const PreprocessArgs& a, std::ostream& err) {
    const Corpus corpus = load_corpus(a.input, g.threads);
    const fs::path out = output_path(g, a.output, "clean.jsonl");
    ensure_parent(out);
    write_file_atomic(out, to_jsonl(corpus.comments));
    for (const auto& e : corpus.load_errors) err << a.input << ":" << e.line << ": " << e.message << "\n";
    err << "kept=" << corpus.counts.kept << " dropped=" << corpus.counts.dropped << "\n";
    return {{"command", "preprocess"},
            {"loaded", corpus.counts.loaded},
            {"kept", corpus.counts.kept},
            {"dropped", corpus.counts.dropped},
            {"malformed_lines", corpus.counts.malformed_lines},
            {"output", out.string()}};
}

nlohmann::json cmd_label(const Globals& g, const LabelArgs& a, std::ostream& err) {
    const auto comments = load_clean_jsonl(a.input);
    const auto lex = load_lexicon(a.lexicon);
    for (std::size_t line : lex.duplicate_lines) err << a.lexicon << ":" << line << ": duplicate phrase ignored\n";
    const EmojiTable emoji = load_emoji_table(a.emoji);
    ScoringOptions opts;
    opts.max_n = g.max_n;
    opts.denominator = g.strict_eq1 ? Denominator::Literal : Denominator::Absolute;
    const LabeledDataset ds = label_corpus(comments, lex.lexicon, emoji, opts, g.threads);
    const fs::path out = output_path(g, a.output, "labeled.jsonl");
    ensure_parent(out);
    write_file_atomic(out, labeled_to_jsonl(ds.items));
    return {{"command", "label"},
            {"comments", ds.items.size()},
            {"lexicon_entries", lex.lexicon.size()},
            {"emoji_entries", emoji.size()},
            {"distribution", distribution_json(ds.distribution)},
            {"output", out.string()}};
}

nlohmann::json cmd_train_embed(const Globals& g, const EmbedArgs& a) {
    const auto comments = load_clean_jsonl(a.input);
    const auto sentences = token_sequences(comments);
    EmbedConfig cfg = a.config;
    cfg.seed = g.seed;
    cfg.threads = g.threads;
    TrainedEmbedding te;
    if (a.method == "fasttext") {
        cfg.subword = a.subword;
        cfg.validate();
        te = train_fasttext(sentences, cfg);
    } else {
        cfg.subword.reset();
        cfg.validate();
        te = train_word2vec(sentences, cfg);
    }
    const fs::path out = output_path(g, a.output, "embeddings.txt");
    ensure_parent(out);
    save_embeddings(te.matrix, out);
    return {{"command", "train-embed"},
            {"method", a.method},
            {"vocabulary", te.vocab.size()},
            {"dim", cfg.dim},
            {"epoch_loss", te.epoch_loss},
            {"output", out.string()}};
}

nlohmann::json cmd_train_clf(const Globals& g, const TrainClfArgs& a) {
    const auto data = load_labeled_jsonl(a.input);
    const EmbeddingMatrix emb = load_embeddings(a.embeddings);
    ModelConfig mc = a.model;
    mc.embed_dim = static_cast<int>(emb.dim);
    for (auto& c : mc.conv) c = {a.filters, a.kernel};
    mc.seed = g.seed;
    Model model = build_model(mc, emb);
    const auto examples = make_examples(model, data, &emb);
    TrainOptions to = a.train;
    to.seed = g.seed;
    const TrainReport report = train(model, examples, to);
    const fs::path out = output_path(g, a.output, "model.ckpt");
    ensure_parent(out);
    save_checkpoint(model, out);
    const fs::path report_path = out.parent_path() / "train_report.json";
    write_file_atomic(report_path, to_json(report).dump(2) + "\n");
    const auto& last = report.epochs[report.chosen_epoch - 1];
    nlohmann::json summary = {{"command", "train-clf"},
                              {"comments", data.size()},
                              {"examples", examples.size()},
                              {"parameters", model.parameter_count()},
                              {"trainable_parameters", model.trainable_parameter_count()},
                              {"epochs_run", report.epochs.size()},
                              {"chosen_epoch", report.chosen_epoch},
                              {"train_accuracy", last.train_accuracy},
                              {"output", out.string()},
                              {"report", report_path.string()}};
    summary["val_accuracy"] = last.val_accuracy ? nlohmann::json(*last.val_accuracy) : nlohmann::json(nullptr);
    return summary;
}

nlohmann::json cmd_predict(const Globals& g, const PredictArgs& a) {
    const Model model = load_checkpoint(a.model);
    const auto emb = maybe_embeddings(a.embeddings);
    const auto comments = load_clean_jsonl(a.input);
    std::string lines;
    std::array<std::size_t, kNumClasses> dist{};
    for (const auto& c : comments) {
        const Prediction p = predict_comment(model, c.tokens, emb.get());
        auto j = clean_to_json(c);
        j["score"] = p.probabilities[static_cast<std::size_t>(label_code(p.label))];
        j["label"] = label_code(p.label);
        j["probabilities"] = p.probabilities;
        j["chunks"] = p.chunks;
        lines += j.dump();
        lines.push_back('\n');
        ++dist[static_cast<std::size_t>(label_code(p.label))];
    }
    const fs::path out = output_path(g, a.output, "predictions.jsonl");
    ensure_parent(out);
    write_file_atomic(out, lines);
    return {{"command", "predict"},
            {"comments", comments.size()},
            {"distribution", distribution_json(dist)},
            {"output", out.string()}};
}

nlohmann::json cmd_evaluate(const Globals& g, const EvaluateArgs& a, std::ostream& err) {
    const Orientation orientation = parse_orientation(g.orientation);
    nlohmann::json summary = {{"command", "evaluate"}, {"orientation", orientation_name(orientation)}};
    ConfusionMatrix cm;
    if (!a.matrix.empty()) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(a.matrix));
        } catch (const nlohmann::json::exception& e) {
            throw InputError(a.matrix + ": " + e.what());
        }
        cm = confusion_from_json(j);
    } else {
        if (a.model.empty() || a.input.empty()) throw InputError("evaluate needs --matrix, or --model with --input");
        const Model model = load_checkpoint(a.model);
        const auto emb = maybe_embeddings(a.embeddings);
        const auto data = load_labeled_jsonl(a.input);
        const Evaluation ev = evaluate(model, data, emb.get());
        cm = ev.confusion;
        summary["accuracy"] = ev.accuracy;
        summary["comments"] = data.size();
    }
    const MacroMetrics mm = macro_metrics(cm, orientation);
    summary["confusion"] = to_json(cm);
    summary["metrics"] = to_json(mm);
    err << format_table(cm, mm);
    if (!a.output.empty() || a.matrix.empty()) {
        const fs::path out = output_path(g, a.output, "evaluation.json");
        ensure_parent(out);
        write_file_atomic(out, summary.dump(2) + "\n");
        summary["output"] = out.string();
    }
    return summary;
}

nlohmann::json cmd_detect(const Globals& g, const DetectArgs& a) {
    const auto data = load_labeled_jsonl(a.input);
    DetectOptions opts;
    opts.z_threshold = g.z_threshold;
    opts.share_threshold = g.share_threshold;
    opts.window_hours = g.window_hours;
    opts.sigma = a.sample_sigma ? SigmaKind::Sample : SigmaKind::Population;
    opts.include_negative = a.include_negative;
    const DetectionResult result = detect_events(data, opts);
    const auto buckets = aggregate(data, a.bucket == "hour" ? BucketWidth::Hour : BucketWidth::Day);
    const fs::path dir = g.output_dir;
    fs::create_directories(dir);
    write_report(dir, result, buckets, opts);
    nlohmann::json summary = report_json(result, opts);
    summary["command"] = "detect";
    summary["buckets"] = buckets.size();
    summary["report"] = (dir / "flaming_report.json").string();
    summary["timeseries"] = (dir / "timeseries.csv").string();
    return summary;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Sentiment labeling, classification and flaming detection for social media comments", "flamewatch"};
    app.set_config("--config", "", "INI file of key=value pairs; [section] names select a subcommand");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
    app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--output-dir", g.output_dir, "Directory for outputs")->capture_default_str();
    app.add_option("--z-threshold", g.z_threshold, "Flag posts with z above this")->capture_default_str();
    app.add_option("--share-threshold", g.share_threshold, "Very Negative share threshold")->capture_default_str();
    app.add_option("--window-hours", g.window_hours, "Burst window width")->capture_default_str();
    app.add_option("--orientation", g.orientation, "Metric orientation")
        ->capture_default_str()
        ->check(CLI::IsMember({"standard", "paper"}));
    app.add_option("--max-n", g.max_n, "Longest lexicon phrase to match")
        ->capture_default_str()
        ->check(CLI::Range(std::size_t{1}, kMaxPhraseTokens));
    app.add_flag("--strict-eq1", g.strict_eq1, "Use the signed modifier counts in the score denominator");

    PreprocessArgs pre;
    auto* c_pre = app.add_subcommand("preprocess", "Clean and tokenize a raw comment JSONL file");
    c_pre->add_option("--input,input", pre.input, "Raw comments (JSONL)")->required()->check(CLI::ExistingFile);
    c_pre->add_option("--output", pre.output, "Output path (default <output-dir>/clean.jsonl)");

    LabelArgs lab;
    auto* c_lab = app.add_subcommand("label", "Assign lexicon-based sentiment labels");
    c_lab->add_option("--input,input", lab.input, "Preprocessed comments")->required()->check(CLI::ExistingFile);
    c_lab->add_option("--lexicon", lab.lexicon, "Phrase lexicon (TSV)")->required()->check(CLI::ExistingFile);
    c_lab->add_option("--emoji", lab.emoji, "Emoji polarity table (TSV)")->required()->check(CLI::ExistingFile);
    c_lab->add_option("--output", lab.output, "Output path (default <output-dir>/labeled.jsonl)");

    EmbedArgs emb;
    auto* c_emb = app.add_subcommand("train-embed", "Train skip-gram word embeddings");
    c_emb->add_option("--input,input", emb.input, "Preprocessed comments")->required()->check(CLI::ExistingFile);
    c_emb->add_option("--output", emb.output, "Output path (default <output-dir>/embeddings.txt)");
    c_emb->add_option("--method", emb.method)->capture_default_str()->check(CLI::IsMember({"word2vec", "fasttext"}));
    c_emb->add_option("--dim", emb.config.dim)->capture_default_str();
    c_emb->add_option("--window", emb.config.window)->capture_default_str();
    c_emb->add_option("--negatives", emb.config.negatives)->capture_default_str();
    c_emb->add_option("--epochs", emb.config.epochs)->capture_default_str();
    c_emb->add_option("--lr", emb.config.initial_lr)->capture_default_str();
    c_emb->add_option("--min-count", emb.config.min_count)->capture_default_str();
    c_emb->add_option("--min-ngram", emb.subword.min_n)->capture_default_str();
    c_emb->add_option("--max-ngram", emb.subword.max_n)->capture_default_str();
    c_emb->add_option("--buckets", emb.subword.buckets)->capture_default_str();

    TrainClfArgs clf;
    auto* c_clf = app.add_subcommand("train-clf", "Train the CNN + Bi-LSTM classifier");
    c_clf->add_option("--input,input", clf.input, "Labeled comments")->required()->check(CLI::ExistingFile);
    c_clf->add_option("--embeddings", clf.embeddings, "Embedding file")->required()->check(CLI::ExistingFile);
    c_clf->add_option("--output", clf.output, "Checkpoint path (default <output-dir>/model.ckpt)");
    c_clf->add_option("--epochs", clf.train.epochs)->capture_default_str();
    c_clf->add_option("--batch-size", clf.train.batch_size)->capture_default_str();
    c_clf->add_option("--val-split", clf.train.val_split)->capture_default_str();
    c_clf->add_option("--lr", clf.train.lr)->capture_default_str();
    c_clf->add_option("--max-tokens", clf.model.max_tokens)->capture_default_str();
    c_clf->add_option("--filters", clf.filters, "Filters in each conv layer")->capture_default_str();
    c_clf->add_option("--kernel", clf.kernel, "Kernel width of each conv layer")->capture_default_str();
    c_clf->add_option("--pool", clf.model.pool)->capture_default_str();
    c_clf->add_option("--lstm-hidden", clf.model.lstm_hidden)->capture_default_str();
    c_clf->add_option("--dense1", clf.model.dense[0])->capture_default_str();
    c_clf->add_option("--dense2", clf.model.dense[1])->capture_default_str();
    c_clf->add_option("--dropout-lstm", clf.model.dropout_lstm)->capture_default_str();
    c_clf->add_option("--dropout-dense", clf.model.dropout_dense)->capture_default_str();
    c_clf->add_flag("--fine-tune", clf.model.fine_tune_embeddings, "Update the embedding table too");

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Label comments with a trained classifier");
    c_pred->add_option("--model", pred.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    c_pred->add_option("--input,input", pred.input, "Preprocessed comments")->required()->check(CLI::ExistingFile);
    c_pred->add_option("--embeddings", pred.embeddings, "Embeddings for out-of-vocabulary words")
        ->check(CLI::ExistingFile);
    c_pred->add_option("--output", pred.output, "Output path (default <output-dir>/predictions.jsonl)");

    EvaluateArgs ev;
    auto* c_ev = app.add_subcommand("evaluate", "Confusion matrix and macro metrics");
    c_ev->add_option("--matrix", ev.matrix, "Confusion matrix JSON")->check(CLI::ExistingFile);
    c_ev->add_option("--model", ev.model, "Checkpoint")->check(CLI::ExistingFile);
    c_ev->add_option("--input,input", ev.input, "Labeled comments")->check(CLI::ExistingFile);
    c_ev->add_option("--embeddings", ev.embeddings, "Embeddings for out-of-vocabulary words")->check(CLI::ExistingFile);
    c_ev->add_option("--output", ev.output, "Output path (default <output-dir>/evaluation.json)");

    DetectArgs det;
    auto* c_det = app.add_subcommand("detect", "Find flaming events in labeled comments");
    c_det->add_option("--input,input", det.input, "Labeled comments")->required()->check(CLI::ExistingFile);
    c_det->add_option("--bucket", det.bucket, "Time series bucket width")
        ->capture_default_str()
        ->check(CLI::IsMember({"day", "hour"}));
    c_det->add_flag("--sample-sigma", det.sample_sigma, "Use the sample standard deviation");
    c_det->add_flag("--include-negative", det.include_negative, "Count Negative comments as well");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        nlohmann::json summary;
        if (c_pre->parsed()) summary = cmd_preprocess(g, pre, err);
        else if (c_lab->parsed()) summary = cmd_label(g, lab, err);
        else if (c_emb->parsed()) summary = cmd_train_embed(g, emb);
        else if (c_clf->parsed()) summary = cmd_train_clf(g, clf);
        else if (c_pred->parsed()) summary = cmd_predict(g, pred);
        else if (c_ev->parsed()) summary = cmd_evaluate(g, ev, err);
        else summary = cmd_detect(g, det);
        summary["seed"] = g.seed;
        out << summary.dump(2) << "\n";
        return 0;
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace flamewatch
