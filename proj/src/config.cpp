#include "srkn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "srkn/errors.hpp"
#include "srkn/model.hpp"
#include "srkn/training.hpp"

namespace srkn {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s.empty() ? "none" : s;
}

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Config Config::defaults() {
    Config c;
    auto& v = c.values_;
    v["seed"] = "0";
    v["out"] = "runs";

    v["data.kind"] = "four_modes";
    v["data.path"] = "";
    v["data.val_path"] = "";
    v["data.test_path"] = "";
    v["data.n"] = "10000";
    v["data.seq_len"] = "6";
    v["data.noise"] = "0.05";
    v["data.val_fraction"] = "0.1";
    v["data.n_test"] = "1000";

    v["taxi.lon_min"] = "-8.73";
    v["taxi.lon_max"] = "-8.50";
    v["taxi.lat_min"] = "41.10";
    v["taxi.lat_max"] = "41.25";
    v["taxi.seq_len"] = "30";
    v["taxi.n_train"] = "86386";
    v["taxi.n_val"] = "200";
    v["taxi.n_test"] = "10000";

    store_model_config(c, ModelConfig{});
    v["model.input_kind"] = "auto";
    v["model.obs_dim"] = "0";

    const TrainConfig t;
    v["train.lr"] = fmt_double(t.lr);
    v["train.batch_size"] = std::to_string(t.batch_size);
    v["train.epochs"] = std::to_string(t.epochs);
    v["train.clip_norm"] = fmt_double(t.clip_norm);
    v["train.optimizer"] = to_string(t.optimizer);
    v["train.anneal_epochs"] = std::to_string(t.anneal_epochs);
    v["train.samples"] = std::to_string(t.samples);
    v["train.resume"] = "";

    v["eval.checkpoint"] = "";
    v["eval.prefix"] = "0";
    v["eval.samples"] = "100";
    v["eval.switch_samples"] = "32";
    v["eval.metrics"] = "recon_ll,one_step,multi_step,w_dist";
    v["eval.wasserstein"] = "suffix";
    v["eval.anchors"] = "5";
    v["eval.max_sequences"] = "0";
    v["eval.label"] = "";

    v["generate.checkpoint"] = "";
    v["generate.prefix"] = "0";
    v["generate.n"] = "50";
    v["generate.horizon"] = "0";
    v["generate.anchor"] = "0";

    v["gradcheck.eps"] = "1e-5";
    v["gradcheck.steps"] = "3";
    v["gradcheck.tolerance"] = "1e-3";
    return c;
}

Config Config::parse(std::string_view text, const std::string& source) {
    Config c;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (const auto hash = line.find('#'); hash != std::string::npos) line = trim(line.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            require(line.back() == ']', source + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, source + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        require(!key.empty(), source + ":" + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        c.values_[key] = trim(std::string_view(line).substr(eq + 1));
    }
    return c;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

void Config::merge(const Config& other) {
    for (const auto& [k, v] : other.values_) set(k, v);
}

void Config::set_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string_view::npos, "override '" + std::string(assignment) + "' must be key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, std::string value) {
    auto it = values_.find(key);
    require(it != values_.end(), "unknown config key '" + key + "'");
    it->second = std::move(value);
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    require(it != values_.end(), "missing config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const auto& s = get(key);
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos == s.size()) return v;
    } catch (const std::exception&) {
    }
    throw ContractError("config key '" + key + "': '" + s + "' is not a number");
}

long long Config::get_int(const std::string& key) const {
    const auto& s = get(key);
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(),
            "config key '" + key + "': '" + s + "' is not an integer");
    return v;
}

std::size_t Config::get_size(const std::string& key) const {
    const long long v = get_int(key);
    require(v >= 0, "config key '" + key + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const auto& s = get(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    require(ec == std::errc() && ptr == s.data() + s.size(),
            "config key '" + key + "': '" + s + "' is not an unsigned integer");
    return v;
}

bool Config::get_bool(const std::string& key) const {
    const auto& s = get(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ContractError("config key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<std::size_t> Config::get_sizes(const std::string& key) const {
    const auto& s = get(key);
    std::vector<std::size_t> out;
    if (s.empty() || s == "none") return out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        require(ec == std::errc() && ptr == item.data() + item.size() && v > 0,
                "config key '" + key + "': '" + s + "' is not a list of positive integers");
        out.push_back(v);
    }
    return out;
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

void Config::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << to_text();
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

void store_model_config(Config& c, const ModelConfig& m) {
    auto& v = c.values_;
    v["model.input_kind"] = to_string(m.input_kind);
    v["model.obs_dim"] = std::to_string(m.obs_dim);
    v["model.m"] = std::to_string(m.m);
    v["model.K"] = std::to_string(m.K);
    v["model.s_dim"] = std::to_string(m.s_dim);
    v["model.gru_hidden"] = std::to_string(m.gru_hidden);
    v["model.encoder_hidden"] = join_sizes(m.encoder_hidden);
    v["model.decoder_hidden"] = join_sizes(m.decoder_hidden);
    v["model.trans_hidden"] = join_sizes(m.trans_hidden);
    v["model.inf_hidden"] = join_sizes(m.inf_hidden);
    v["model.activation"] = to_string(m.activation);
    v["model.beta_rec"] = fmt_double(m.beta_rec);
    v["model.beta_z"] = fmt_double(m.beta_z);
    v["model.beta_s"] = fmt_double(m.beta_s);
    v["model.beta_pred"] = fmt_double(m.beta_pred);
    v["model.bandwidth"] = std::to_string(m.bandwidth);
    v["model.switching"] = m.switching ? "true" : "false";
    v["model.pred_trans_noise"] = m.pred_trans_noise ? "true" : "false";
    v["model.init_offdiag_scale"] = fmt_double(m.init_offdiag_scale);
    v["model.init_trans_noise"] = fmt_double(m.init_trans_noise);
}

ModelConfig model_config_from(const Config& c) {
    ModelConfig m;
    const auto& kind = c.get("model.input_kind");
    require(kind == "real" || kind == "image",
            "model.input_kind must be 'real' or 'image' (got '" + kind + "')");
    m.input_kind = kind == "real" ? InputKind::real : InputKind::image;
    m.obs_dim = c.get_size("model.obs_dim");
    m.m = c.get_size("model.m");
    m.K = c.get_size("model.K");
    m.s_dim = c.get_size("model.s_dim");
    m.gru_hidden = c.get_size("model.gru_hidden");
    m.encoder_hidden = c.get_sizes("model.encoder_hidden");
    m.decoder_hidden = c.get_sizes("model.decoder_hidden");
    m.trans_hidden = c.get_sizes("model.trans_hidden");
    m.inf_hidden = c.get_sizes("model.inf_hidden");
    const auto& act = c.get("model.activation");
    require(act == "tanh" || act == "relu", "model.activation must be 'tanh' or 'relu'");
    m.activation = act == "tanh" ? Activation::tanh : Activation::relu;
    m.beta_rec = c.get_double("model.beta_rec");
    m.beta_z = c.get_double("model.beta_z");
    m.beta_s = c.get_double("model.beta_s");
    m.beta_pred = c.get_double("model.beta_pred");
    m.bandwidth = c.get_size("model.bandwidth");
    m.switching = c.get_bool("model.switching");
    m.pred_trans_noise = c.get_bool("model.pred_trans_noise");
    m.init_offdiag_scale = c.get_double("model.init_offdiag_scale");
    m.init_trans_noise = c.get_double("model.init_trans_noise");
    m.validate();
    return m;
}

TrainConfig train_config_from(const Config& c) {
    TrainConfig t;
    t.lr = c.get_double("train.lr");
    t.batch_size = c.get_size("train.batch_size");
    t.epochs = c.get_size("train.epochs");
    t.clip_norm = c.get_double("train.clip_norm");
    t.seed = c.get_u64("seed");
    const auto& opt = c.get("train.optimizer");
    require(opt == "adam" || opt == "sgd", "train.optimizer must be 'adam' or 'sgd'");
    t.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    t.anneal_epochs = c.get_size("train.anneal_epochs");
    t.samples = c.get_size("train.samples");
    t.validate();
    return t;
}

}  // namespace srkn
