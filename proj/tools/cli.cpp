#include "cli.hpp"

#include "uthp/ad/gradcheck.hpp"
#include "uthp/checkpoint.hpp"
#include "uthp/synthgen.hpp"
#include "uthp/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace uthp::cli {

namespace {

using nlohmann::json;

struct Ablation {
    bool no_act = false;
    std::optional<int> iters;
    bool no_cnn_ffn = false;
    bool no_postprocess_rnn = false;
    bool stacked_layers = false;

    void add_to(CLI::App& cmd) {
        cmd.add_flag("--no-act", no_act, "Pure recurrence instead of adaptive halting")->default_str("false");
        cmd.add_option("--iters", iters, "Number of recurrent iterations (max_n)")
            ->check(CLI::PositiveNumber)
            ->default_str("config max_iterations");
        cmd.add_flag("--no-cnn-ffn", no_cnn_ffn, "Plain two-layer feed-forward block")->default_str("false");
        cmd.add_flag("--no-postprocess-rnn", no_postprocess_rnn, "Drop the FC3-RNN-FC4 block")->default_str("false");
        cmd.add_flag("--stacked-layers", stacked_layers, "One distinct encoding layer per iteration")
            ->default_str("false");
    }

    void apply(ModelConfig& m) const {
        if (no_act) m.act = false;
        if (iters) m.max_iterations = *iters;
        if (no_cnn_ffn) m.cnn_ffn = false;
        if (no_postprocess_rnn) m.d_rnn = 0;
        if (stacked_layers) m.layer_sharing = LayerSharing::Stacked;
        m.validate();
    }
};

std::string config_footer() {
    std::string text = "Configuration file keys and defaults:\n";
    for (const auto& [key, value] : config_keys_with_defaults()) text += "  " + key + " = " + value + "\n";
    return text;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path);
    out << text;
    if (!out) throw DataError("failed writing " + path);
}

std::vector<double> parse_list(const std::string& text, const char sep) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + item + "'");
        }
    }
    return out;
}

HawkesParams hawkes_from_flags(int num_types, const std::string& mu_text, const std::string& a_text, double decay) {
    HawkesParams p;
    const auto mu = parse_list(mu_text, ',');
    if (mu.size() == 1) {
        p.mu = Eigen::VectorXd::Constant(num_types, mu.front());
    } else if (static_cast<int>(mu.size()) == num_types) {
        p.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), num_types);
    } else {
        throw ConfigError("--mu needs 1 or num_types values");
    }
    std::vector<std::vector<double>> rows;
    std::stringstream ss(a_text);
    std::string row;
    while (std::getline(ss, row, ';')) rows.push_back(parse_list(row, ','));
    p.a.resize(num_types, num_types);
    if (rows.size() == 1 && rows.front().size() == 1) {
        p.a.setConstant(rows.front().front());
    } else {
        if (static_cast<int>(rows.size()) != num_types) throw ConfigError("--a needs num_types rows separated by ';'");
        for (int r = 0; r < num_types; ++r) {
            if (static_cast<int>(rows[r].size()) != num_types) throw ConfigError("--a row has the wrong length");
            for (int c = 0; c < num_types; ++c) p.a(r, c) = rows[r][c];
        }
    }
    p.decay = decay;
    p.validate();
    return p;
}

std::string with_suffix(const std::string& path, const std::string& part) {
    const auto slash = path.find_last_of('/');
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos || (slash != std::string::npos && dot < slash)) return path + "." + part;
    return path.substr(0, dot) + "." + part + path.substr(dot);
}

/// Small configuration used by grad-check when no config file is given.
ModelConfig grad_check_config() {
    ModelConfig m;
    m.d_model = 8;
    m.d_hidden = 16;
    m.d_key = 4;
    m.d_value = 4;
    m.heads = 2;
    m.d_rnn = 8;
    m.max_iterations = 2;
    m.alpha_trainable = true;
    return m;
}

Dataset grad_check_data(int num_types, std::uint64_t seed) {
    Rng rng(derive_key(seed, {0x9c}));
    Dataset d;
    d.num_types = num_types;
    for (int n = 0; n < 2; ++n) {
        EventSequence s;
        double t = 0.0;
        for (int i = 0; i < 6; ++i) {
            t += 0.2 + rng.exponential(1.0);
            s.events.push_back({t, 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(num_types)))});
        }
        d.sequences.push_back(std::move(s));
    }
    return d;
}

json grad_check(const ModelConfig& cfg, int num_types, std::uint64_t seed) {
    UthpModel model(cfg, num_types, seed);
    const Dataset data = grad_check_data(num_types, seed);
    const EstimatorSpec est{Estimator::MonteCarlo, 100, derive_key(seed, {0x9d})};
    auto loss = [&]() {
        Tensor total;
        for (std::size_t n = 0; n < data.size(); ++n) {
            const EventSequence& seq = data.sequences[n];
            const Tensor hidden = model.forward(seq).hidden;
            const LogLikelihood ll = sequence_loglik(seq, hidden, model.intensity(), est, n);
            const HeadOutputs heads = prediction_heads(seq, hidden, model.heads());
            const Tensor obj = total_objective(ll.total, type_loss(heads, seq), time_loss(heads, seq), 1.0, 0.01).total;
            total = n == 0 ? obj : total + obj;
        }
        return total;
    };
    const auto report = ad::gradient_check<double>(model.params(), loss);
    return {{"max_rel_error", report.max_error},
            {"checked", report.checked},
            {"worst",
             {{"parameter", report.worst.parameter},
              {"index", report.worst.index},
              {"analytic", report.worst.analytic},
              {"numeric", report.worst.numeric}}},
            {"passed", report.max_error < 1e-4}};
}

void emit(const json& j, const std::string& path, std::ostream& out) {
    const std::string text = j.dump(2) + "\n";
    if (path.empty()) {
        out << text;
    } else {
        write_file(path, text);
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Universal transformer Hawkes process toolkit", "uthp"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    bool quiet = false;
    app.add_flag("--quiet", quiet, "Suppress progress logging on stderr");

    // generate
    auto* gen = app.add_subcommand("generate", "Simulate a multivariate exponential-kernel Hawkes dataset");
    std::string gen_out;
    int gen_types = 2;
    std::string gen_mu = "0.2";
    std::string gen_a = "0.4,0.2;0.2,0.4";
    double gen_decay = 1.0;
    std::size_t gen_n = 100;
    double gen_horizon = 50.0;
    std::uint64_t gen_seed = 1;
    std::string gen_split;
    gen->add_option("--out", gen_out, "Output JSON-Lines file")->required();
    gen->add_option("--num-types", gen_types, "Number of event types C")->check(CLI::PositiveNumber);
    gen->add_option("--mu", gen_mu, "Background rates, one value or C comma-separated values");
    gen->add_option("--a", gen_a, "Branching matrix, rows separated by ';', or one value for every entry");
    gen->add_option("--decay", gen_decay, "Kernel decay rate");
    gen->add_option("--n", gen_n, "Number of sequences")->check(CLI::PositiveNumber);
    gen->add_option("--horizon", gen_horizon, "Observation window [0, T]");
    gen->add_option("--seed", gen_seed, "Random seed");
    gen->add_option("--split", gen_split,
                    "Also write train/dev/test files for comma-separated ratios, e.g. 0.8,0.1,0.1")
        ->default_str("no split");

    // train
    auto* tr = app.add_subcommand("train", "Train a model");
    std::string tr_config, tr_train, tr_dev, tr_ckpt, tr_report;
    std::optional<std::uint64_t> tr_seed;
    std::optional<int> tr_epochs, tr_types;
    bool tr_timing = false;
    Ablation tr_abl;
    tr->add_option("--config", tr_config, "Flat key = value configuration file")->default_str("built-in defaults");
    tr->add_option("--train", tr_train, "Training data (overrides the config)")->default_str("config train");
    tr->add_option("--dev", tr_dev, "Development data (overrides the config)")->default_str("config dev");
    tr->add_option("--out-checkpoint", tr_ckpt, "Checkpoint path (overrides the config)")
        ->default_str("config checkpoint");
    tr->add_option("--report", tr_report, "Run report path")->default_str("<checkpoint>.report.json");
    tr->add_option("--num-types", tr_types, "Number of event types (overrides the config)")
        ->check(CLI::PositiveNumber)
        ->default_str("largest type id in the data");
    tr->add_option("--seed", tr_seed, "Random seed (overrides the config)")->default_str("config seed");
    tr->add_option("--epochs", tr_epochs, "Epoch count (overrides the config)")
        ->check(CLI::PositiveNumber)
        ->default_str("config epochs");
    tr->add_flag("--timing", tr_timing, "Record wall time in the run report")->default_str("false");
    tr->footer(config_footer());
    tr_abl.add_to(*tr);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a dataset with a trained model");
    std::string ev_ckpt, ev_data, ev_out;
    std::uint64_t ev_seed = 1;
    int ev_samples = 10000;
    std::string ev_estimator = "mc";
    std::size_t ev_batch = 16;
    ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
    ev->add_option("--data", ev_data, "JSON-Lines dataset")->required();
    ev->add_option("--out-metrics", ev_out, "Metrics JSON file")->required();
    ev->add_option("--seed", ev_seed, "Seed for the Monte-Carlo samples");
    ev->add_option("--mc-samples", ev_samples, "Samples per interval for the compensator")->check(CLI::PositiveNumber);
    ev->add_option("--estimator", ev_estimator, "Compensator estimator")->check(CLI::IsMember({"mc", "trapezoid"}));
    ev->add_option("--batch-size", ev_batch, "Evaluation batch size")->check(CLI::PositiveNumber);

    // predict
    auto* pr = app.add_subcommand("predict", "Write next-event predictions");
    std::string pr_ckpt, pr_data, pr_out;
    pr->add_option("--checkpoint", pr_ckpt, "Model checkpoint")->required();
    pr->add_option("--data", pr_data, "JSON-Lines dataset")->required();
    pr->add_option("--out", pr_out, "Predictions JSON-Lines file")->required();

    // count-params
    auto* cp = app.add_subcommand("count-params", "Count trainable parameters");
    std::string cp_config, cp_out;
    int cp_types = 2;
    Ablation cp_abl;
    cp->add_option("--config", cp_config, "Configuration file")->default_str("built-in defaults");
    cp->add_option("--num-types", cp_types, "Number of event types C (config num_types when set)")
        ->check(CLI::PositiveNumber);
    cp->add_option("--out", cp_out, "Write the JSON result here instead of stdout")->default_str("stdout");
    cp->footer(config_footer());
    cp_abl.add_to(*cp);

    // grad-check
    auto* gc = app.add_subcommand("grad-check", "Compare analytic gradients with central finite differences");
    std::string gc_config, gc_out;
    std::uint64_t gc_seed = 1;
    int gc_types = 3;
    Ablation gc_abl;
    gc->add_option("--config", gc_config, "Configuration file")
        ->default_str("d_model=8 d_hidden=16 d_key=d_value=4 heads=2 d_rnn=8 alpha_trainable=true");
    gc->add_option("--seed", gc_seed, "Seed for parameters and data");
    gc->add_option("--num-types", gc_types, "Number of event types C")->check(CLI::PositiveNumber);
    gc->add_option("--out", gc_out, "Write the JSON result here instead of stdout")->default_str("stdout");
    gc_abl.add_to(*gc);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
        return 2;
    }

    set_log_quiet(quiet);
    try {
        if (*gen) {
            const HawkesParams p = hawkes_from_flags(gen_types, gen_mu, gen_a, gen_decay);
            const GenSpec spec{gen_n, gen_horizon, gen_seed};
            const Dataset d = simulate(p, spec);
            save_dataset(d, gen_out);
            write_file(gen_out + ".params.json", to_json(p, spec).dump(2) + "\n");
            if (!gen_split.empty()) {
                const auto r = parse_list(gen_split, ',');
                if (r.size() != 3) throw ConfigError("--split needs three ratios");
                const auto [a, b, c] = split_dataset(d, {r[0], r[1], r[2]}, gen_seed);
                save_dataset(a, with_suffix(gen_out, "train"));
                save_dataset(b, with_suffix(gen_out, "dev"));
                save_dataset(c, with_suffix(gen_out, "test"));
            }
        } else if (*tr) {
            ConfigFile cfg = tr_config.empty() ? ConfigFile{} : load_config_file(tr_config);
            if (!tr_train.empty()) cfg.train_path = tr_train;
            if (!tr_dev.empty()) cfg.dev_path = tr_dev;
            if (!tr_ckpt.empty()) cfg.train.checkpoint_path = tr_ckpt;
            if (tr_types) cfg.num_types = *tr_types;
            if (tr_seed) cfg.train.seed = *tr_seed;
            if (tr_epochs) cfg.train.epochs = *tr_epochs;
            tr_abl.apply(cfg.model);
            cfg.train.validate();
            if (cfg.train_path.empty()) throw ConfigError("no training data: pass --train or set train in the config");
            if (cfg.train.checkpoint_path.empty()) throw ConfigError("no checkpoint path: pass --out-checkpoint");

            const Dataset train_set = load_dataset(cfg.train_path, cfg.num_types);
            std::optional<Dataset> dev_set;
            if (!cfg.dev_path.empty()) dev_set = load_dataset(cfg.dev_path, train_set.num_types);
            int num_types = train_set.num_types;
            if (dev_set) num_types = std::max(num_types, dev_set->num_types);

            UthpModel model(cfg.model, num_types, cfg.train.seed);
            const RunReport report = train(model, train_set, dev_set ? &*dev_set : nullptr, cfg.train);
            if (tr_timing) log_info("wall time " + std::to_string(report.wall_seconds) + " s");
            const std::string report_path =
                tr_report.empty() ? cfg.train.checkpoint_path + ".report.json" : tr_report;
            write_file(report_path, report.to_json(tr_timing).dump(2) + "\n");
        } else if (*ev) {
            const UthpModel model = load_checkpoint(ev_ckpt);
            const Dataset data = load_dataset(ev_data, model.num_types());
            EvalOptions opt;
            opt.estimator = ev_estimator == "trapezoid" ? Estimator::Trapezoid : Estimator::MonteCarlo;
            opt.mc_samples = ev_samples;
            opt.seed = ev_seed;
            opt.batch_size = ev_batch;
            const Evaluation e = evaluate(model, data, opt);
            json j = e.metrics.to_json();
            j["per_sequence_ll"] = e.sequence_loglik;
            j["act"] = e.act.to_json();
            write_file(ev_out, j.dump(2) + "\n");
        } else if (*pr) {
            const UthpModel model = load_checkpoint(pr_ckpt);
            const Dataset data = load_dataset(pr_data, model.num_types());
            const auto preds = predict_dataset(model, data);
            std::string text;
            for (std::size_t n = 0; n < preds.size(); ++n)
                for (const auto& r : preds[n]) text += prediction_json(n, r).dump() + "\n";
            write_file(pr_out, text);
        } else if (*cp) {
            ConfigFile cfg = cp_config.empty() ? ConfigFile{} : load_config_file(cp_config);
            cp_abl.apply(cfg.model);
            const int c = cfg.num_types && cp->count("--num-types") == 0 ? *cfg.num_types : cp_types;
            const UthpModel model(cfg.model, c, 0);
            json breakdown = json::array();
            for (const auto& [name, n] : model.count_breakdown()) breakdown.push_back({{"name", name}, {"count", n}});
            emit({{"total", model.count_params()}, {"tensors", breakdown}}, cp_out, out);
        } else if (*gc) {
            ModelConfig m = grad_check_config();
            if (!gc_config.empty()) m = load_config_file(gc_config).model;
            gc_abl.apply(m);
            const json report = grad_check(m, gc_types, gc_seed);
            emit(report, gc_out, out);
            if (!report.at("passed").get<bool>()) return 3;
        }
    } catch (const Error& e) {
        err << json{{"error", e.kind()}, {"message", e.what()}}.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace uthp::cli
