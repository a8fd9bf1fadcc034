#include "uthp/config.hpp"

#include "uthp/ad/ops.hpp"
#include "uthp/common.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace uthp {

using nlohmann::json;

void ModelConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    require(d_model > 0 && d_hidden > 0 && d_key > 0 && d_value > 0 && heads > 0, "all dimensions must be positive");
    require(d_model % 2 == 0, "d_model must be even for the temporal encoding");
    require(d_rnn >= 0, "d_rnn must be non-negative");
    require(max_iterations >= 1, "max_iterations must be at least 1");
    require(act_threshold > 0.0 && act_threshold <= 1.0, "act_threshold must lie in (0, 1]");
    require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
    require(softplus_beta > 0.0, "softplus_beta must be positive");
    require(time_scale > 0.0, "time_scale must be positive");
    require(!(act && layer_sharing == LayerSharing::Stacked), "act requires layer_sharing = shared");
    if (cnn_ffn) {
        require(conv_kernel >= 1 && conv_stride >= 1 && conv_padding >= 0 && pool_size >= 1 && pool_stride >= 1,
                "conv/pool settings must be positive");
        require(ffn_reduced_length() > 0, "conv/pool settings leave no features for FC2");
    }
}

int ModelConfig::ffn_reduced_length() const {
    if (!cnn_ffn) return d_hidden;
    const auto conv = ad::conv_output_length(d_hidden, conv_kernel, conv_stride, conv_padding);
    return static_cast<int>(ad::pool_output_length(conv, pool_size, pool_stride));
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (mc_samples < 1 || eval_mc_samples < 1) throw ConfigError("mc sample counts must be at least 1");
    if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
    if (early_stop_patience < 0) throw ConfigError("early_stop_patience must be non-negative");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (type_weight() < 0.0 || time_weight() < 0.0) throw ConfigError("objective weights must be non-negative");
    if (!(grad_clip > 0.0)) throw ConfigError("grad_clip must be positive");
}

double TrainConfig::type_weight() const {
    return alpha_type.value_or(objective == Objective::Prediction ? 1.0 : 0.0);
}

double TrainConfig::time_weight() const {
    return alpha_time.value_or(objective == Objective::Prediction ? 0.01 : 0.0);
}

std::string to_string(LayerSharing s) { return s == LayerSharing::Shared ? "shared" : "stacked"; }
std::string to_string(Estimator e) { return e == Estimator::MonteCarlo ? "mc" : "trapezoid"; }
std::string to_string(Objective o) { return o == Objective::Likelihood ? "likelihood" : "prediction"; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "off" || v == "no") return false;
    throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

struct KeySpec {
    std::function<void(ConfigFile&, const std::string&)> set;
    std::function<std::string(const ConfigFile&)> get;
};

// Shortest text that reads back to the same double.
std::string fmt_double(double d) {
    char buf[32];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, end);
}

const std::map<std::string, KeySpec>& schema() {
    static const std::map<std::string, KeySpec> keys = [] {
        std::map<std::string, KeySpec> m;
        auto int_key = [&m](const std::string& k, auto member_ptr_getter) {
            m[k] = {[k, member_ptr_getter](ConfigFile& c, const std::string& v) {
                        member_ptr_getter(c) = static_cast<int>(parse_int(k, v));
                    },
                    [member_ptr_getter](const ConfigFile& c) {
                        return std::to_string(member_ptr_getter(const_cast<ConfigFile&>(c)));
                    }};
        };
        auto dbl_key = [&m](const std::string& k, auto getter) {
            m[k] = {[k, getter](ConfigFile& c, const std::string& v) { getter(c) = parse_double(k, v); },
                    [getter](const ConfigFile& c) { return fmt_double(getter(const_cast<ConfigFile&>(c))); }};
        };
        auto bool_key = [&m](const std::string& k, auto getter) {
            m[k] = {[k, getter](ConfigFile& c, const std::string& v) { getter(c) = parse_bool(k, v); },
                    [getter](const ConfigFile& c) {
                        return std::string(getter(const_cast<ConfigFile&>(c)) ? "true" : "false");
                    }};
        };

        int_key("d_model", [](ConfigFile& c) -> int& { return c.model.d_model; });
        int_key("d_hidden", [](ConfigFile& c) -> int& { return c.model.d_hidden; });
        int_key("d_key", [](ConfigFile& c) -> int& { return c.model.d_key; });
        int_key("d_value", [](ConfigFile& c) -> int& { return c.model.d_value; });
        int_key("heads", [](ConfigFile& c) -> int& { return c.model.heads; });
        int_key("d_rnn", [](ConfigFile& c) -> int& { return c.model.d_rnn; });
        int_key("max_iterations", [](ConfigFile& c) -> int& { return c.model.max_iterations; });
        bool_key("act", [](ConfigFile& c) -> bool& { return c.model.act; });
        dbl_key("act_threshold", [](ConfigFile& c) -> double& { return c.model.act_threshold; });
        bool_key("cnn_ffn", [](ConfigFile& c) -> bool& { return c.model.cnn_ffn; });
        m["layer_sharing"] = {[](ConfigFile& c, const std::string& v) {
                                  if (v == "shared") c.model.layer_sharing = LayerSharing::Shared;
                                  else if (v == "stacked") c.model.layer_sharing = LayerSharing::Stacked;
                                  else throw ConfigError("layer_sharing: expected shared|stacked, got '" + v + "'");
                              },
                              [](const ConfigFile& c) { return to_string(c.model.layer_sharing); }};
        dbl_key("dropout", [](ConfigFile& c) -> double& { return c.model.dropout; });
        dbl_key("softplus_beta", [](ConfigFile& c) -> double& { return c.model.softplus_beta; });
        int_key("conv_kernel", [](ConfigFile& c) -> int& { return c.model.conv_kernel; });
        int_key("conv_stride", [](ConfigFile& c) -> int& { return c.model.conv_stride; });
        int_key("conv_padding", [](ConfigFile& c) -> int& { return c.model.conv_padding; });
        int_key("pool_size", [](ConfigFile& c) -> int& { return c.model.pool_size; });
        int_key("pool_stride", [](ConfigFile& c) -> int& { return c.model.pool_stride; });
        bool_key("alpha_trainable", [](ConfigFile& c) -> bool& { return c.model.alpha_trainable; });
        dbl_key("alpha_init", [](ConfigFile& c) -> double& { return c.model.alpha_init; });
        dbl_key("time_scale", [](ConfigFile& c) -> double& { return c.model.time_scale; });

        int_key("epochs", [](ConfigFile& c) -> int& { return c.train.epochs; });
        int_key("batch_size", [](ConfigFile& c) -> int& { return c.train.batch_size; });
        m["seed"] = {[](ConfigFile& c, const std::string& v) {
                         const auto s = parse_int("seed", v);
                         if (s < 0) throw ConfigError("seed must be non-negative");
                         c.train.seed = static_cast<std::uint64_t>(s);
                     },
                     [](const ConfigFile& c) { return std::to_string(c.train.seed); }};
        m["estimator"] = {[](ConfigFile& c, const std::string& v) {
                              if (v == "mc") c.train.estimator = Estimator::MonteCarlo;
                              else if (v == "trapezoid") c.train.estimator = Estimator::Trapezoid;
                              else throw ConfigError("estimator: expected mc|trapezoid, got '" + v + "'");
                          },
                          [](const ConfigFile& c) { return to_string(c.train.estimator); }};
        int_key("mc_samples", [](ConfigFile& c) -> int& { return c.train.mc_samples; });
        int_key("eval_mc_samples", [](ConfigFile& c) -> int& { return c.train.eval_mc_samples; });
        m["objective"] = {[](ConfigFile& c, const std::string& v) {
                              if (v == "likelihood") c.train.objective = Objective::Likelihood;
                              else if (v == "prediction") c.train.objective = Objective::Prediction;
                              else throw ConfigError("objective: expected likelihood|prediction, got '" + v + "'");
                          },
                          [](const ConfigFile& c) { return to_string(c.train.objective); }};
        m["alpha_type"] = {[](ConfigFile& c, const std::string& v) { c.train.alpha_type = parse_double("alpha_type", v); },
                           [](const ConfigFile& c) { return fmt_double(c.train.type_weight()); }};
        m["alpha_time"] = {[](ConfigFile& c, const std::string& v) { c.train.alpha_time = parse_double("alpha_time", v); },
                           [](const ConfigFile& c) { return fmt_double(c.train.time_weight()); }};
        int_key("eval_every", [](ConfigFile& c) -> int& { return c.train.eval_every; });
        int_key("early_stop_patience", [](ConfigFile& c) -> int& { return c.train.early_stop_patience; });
        dbl_key("lr", [](ConfigFile& c) -> double& { return c.train.lr; });
        dbl_key("beta1", [](ConfigFile& c) -> double& { return c.train.beta1; });
        dbl_key("beta2", [](ConfigFile& c) -> double& { return c.train.beta2; });
        dbl_key("adam_eps", [](ConfigFile& c) -> double& { return c.train.adam_eps; });
        dbl_key("weight_decay", [](ConfigFile& c) -> double& { return c.train.weight_decay; });
        dbl_key("grad_clip", [](ConfigFile& c) -> double& { return c.train.grad_clip; });

        m["checkpoint"] = {[](ConfigFile& c, const std::string& v) { c.train.checkpoint_path = v; },
                           [](const ConfigFile& c) { return c.train.checkpoint_path; }};
        m["train"] = {[](ConfigFile& c, const std::string& v) { c.train_path = v; },
                      [](const ConfigFile& c) { return c.train_path; }};
        m["dev"] = {[](ConfigFile& c, const std::string& v) { c.dev_path = v; },
                    [](const ConfigFile& c) { return c.dev_path; }};
        m["num_types"] = {[](ConfigFile& c, const std::string& v) {
                              const auto n = parse_int("num_types", v);
                              if (n < 1) throw ConfigError("num_types must be positive");
                              c.num_types = static_cast<int>(n);
                          },
                          [](const ConfigFile& c) { return c.num_types ? std::to_string(*c.num_types) : std::string(); }};
        return m;
    }();
    return keys;
}

}  // namespace

ConfigFile parse_config_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& keys = schema();
        auto it = keys.find(key);
        if (it == keys.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->second.set(cfg, value);
    }
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
}

ConfigFile load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::vector<std::pair<std::string, std::string>> config_keys_with_defaults() {
    const ConfigFile defaults;
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, spec] : schema()) out.emplace_back(k, spec.get(defaults));
    return out;
}

json to_json(const ModelConfig& c) {
    return json{{"d_model", c.d_model},
                {"d_hidden", c.d_hidden},
                {"d_key", c.d_key},
                {"d_value", c.d_value},
                {"heads", c.heads},
                {"d_rnn", c.d_rnn},
                {"max_iterations", c.max_iterations},
                {"act", c.act},
                {"act_threshold", c.act_threshold},
                {"cnn_ffn", c.cnn_ffn},
                {"layer_sharing", to_string(c.layer_sharing)},
                {"dropout", c.dropout},
                {"softplus_beta", c.softplus_beta},
                {"conv_kernel", c.conv_kernel},
                {"conv_stride", c.conv_stride},
                {"conv_padding", c.conv_padding},
                {"pool_size", c.pool_size},
                {"pool_stride", c.pool_stride},
                {"alpha_trainable", c.alpha_trainable},
                {"alpha_init", c.alpha_init},
                {"time_scale", c.time_scale}};
}

ModelConfig model_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");
    const json reference = to_json(ModelConfig{});
    for (const auto& [k, v] : j.items())
        if (!reference.contains(k)) throw ConfigError("unknown model config key in checkpoint: " + k);
    for (const auto& [k, v] : reference.items())
        if (!j.contains(k)) throw ConfigError("missing model config key in checkpoint: " + k);
    try {
        ModelConfig c;
        c.d_model = j.at("d_model").get<int>();
        c.d_hidden = j.at("d_hidden").get<int>();
        c.d_key = j.at("d_key").get<int>();
        c.d_value = j.at("d_value").get<int>();
        c.heads = j.at("heads").get<int>();
        c.d_rnn = j.at("d_rnn").get<int>();
        c.max_iterations = j.at("max_iterations").get<int>();
        c.act = j.at("act").get<bool>();
        c.act_threshold = j.at("act_threshold").get<double>();
        c.cnn_ffn = j.at("cnn_ffn").get<bool>();
        const auto sharing = j.at("layer_sharing").get<std::string>();
        if (sharing != "shared" && sharing != "stacked") throw ConfigError("bad layer_sharing: " + sharing);
        c.layer_sharing = sharing == "shared" ? LayerSharing::Shared : LayerSharing::Stacked;
        c.dropout = j.at("dropout").get<double>();
        c.softplus_beta = j.at("softplus_beta").get<double>();
        c.conv_kernel = j.at("conv_kernel").get<int>();
        c.conv_stride = j.at("conv_stride").get<int>();
        c.conv_padding = j.at("conv_padding").get<int>();
        c.pool_size = j.at("pool_size").get<int>();
        c.pool_stride = j.at("pool_stride").get<int>();
        c.alpha_trainable = j.at("alpha_trainable").get<bool>();
        c.alpha_init = j.at("alpha_init").get<double>();
        c.time_scale = j.at("time_scale").get<double>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad model config: ") + e.what());
    }
}

}  // namespace uthp
