#include "srkn/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "srkn/config.hpp"
#include "srkn/datasets.hpp"
#include "srkn/errors.hpp"
#include "srkn/metrics.hpp"
#include "srkn/model.hpp"
#include "srkn/plot.hpp"
#include "srkn/training.hpp"

namespace fs = std::filesystem;

namespace srkn {

namespace {

// Seed streams of the generated splits.
constexpr std::uint64_t kTrainStream = 1, kValStream = 2, kTestStream = 3;

struct Flags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::vector<std::string> sets;
};

Config resolve_config(const Flags& f) {
    Config c = Config::defaults();
    if (!f.config_path.empty()) c.merge(Config::load(f.config_path));
    for (const auto& s : f.sets) c.set_override(s);
    if (f.seed) c.set("seed", std::to_string(*f.seed));
    if (f.out) c.set("out", *f.out);
    return c;
}

fs::path data_path(const std::string& p) {
    fs::path path(p);
    if (path.is_absolute() || fs::exists(path)) return path;
    if (const char* dir = std::getenv("SRKN_DATA_DIR"); dir && *dir) return fs::path(dir) / path;
    return path;
}

fs::path make_run_dir(const Config& c) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    std::ostringstream name;
    name << std::put_time(&utc, "%Y%m%d-%H%M%S") << "-seed" << c.get("seed");
    const fs::path root(c.get("out"));
    fs::path dir = root / name.str();
    for (int k = 1; fs::exists(dir); ++k) dir = root / (name.str() + "-" + std::to_string(k));
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create run directory '" + dir.string() + "': " + ec.message());
    return dir;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + path.string() + "'");
    os << text;
    if (!os) throw IoError("write failed for '" + path.string() + "'");
}

const std::string& checked_kind(const Config& c) {
    const auto& kind = c.get("data.kind");
    require(kind == "four_modes" || kind == "car_images" || kind == "taxi",
            "data.kind must be four_modes, car_images or taxi (got '" + kind + "')");
    return kind;
}

SequenceBatch generate_split(const Config& c, std::size_t n, std::uint64_t stream) {
    const auto& kind = checked_kind(c);
    const std::uint64_t seed = derive_seed(c.get_u64("seed"), stream);
    if (kind == "four_modes") {
        FourModeOptions opt;
        opt.noise = c.get_double("data.noise");
        return gen_four_modes(n, seed, opt);
    }
    require(kind == "car_images", "datagen: taxi data is read from the public corpus, not generated");
    return gen_car_images(n, c.get_size("data.seq_len"), seed);
}

TaxiData taxi_data(const Config& c) {
    TaxiConfig tc;
    tc.lon_min = c.get_double("taxi.lon_min");
    tc.lon_max = c.get_double("taxi.lon_max");
    tc.lat_min = c.get_double("taxi.lat_min");
    tc.lat_max = c.get_double("taxi.lat_max");
    tc.seq_len = c.get_size("taxi.seq_len");
    tc.n_train = c.get_size("taxi.n_train");
    tc.n_val = c.get_size("taxi.n_val");
    tc.n_test = c.get_size("taxi.n_test");
    tc.seed = c.get_u64("seed");
    const auto& p = c.get("data.path");
    return load_taxi(data_path(p.empty() ? "train.csv" : p), tc);
}

struct Splits {
    SequenceBatch train;
    std::optional<SequenceBatch> val;
};

Splits training_data(const Config& c) {
    const auto& kind = checked_kind(c);
    if (kind == "taxi") {
        auto t = taxi_data(c);
        return {std::move(t.train), std::move(t.val)};
    }
    Splits s;
    if (const auto& p = c.get("data.path"); !p.empty()) {
        s.train = read_dataset(data_path(p));
        if (const auto& v = c.get("data.val_path"); !v.empty()) s.val = read_dataset(data_path(v));
        return s;
    }
    const std::size_t n = c.get_size("data.n");
    const auto n_val = static_cast<std::size_t>(std::llround(c.get_double("data.val_fraction") * n));
    s.train = generate_split(c, n, kTrainStream);
    if (n_val > 0) s.val = generate_split(c, n_val, kValStream);
    return s;
}

SequenceBatch test_data(const Config& c) {
    const auto& kind = checked_kind(c);
    SequenceBatch b;
    if (kind == "taxi") {
        b = taxi_data(c).test;
    } else if (const auto& t = c.get("data.test_path"); !t.empty()) {
        b = read_dataset(data_path(t));
    } else if (const auto& p = c.get("data.path"); !p.empty()) {
        b = read_dataset(data_path(p));
    } else {
        b = generate_split(c, c.get_size("data.n_test"), kTestStream);
    }
    if (const std::size_t cap = c.get_size("eval.max_sequences"); cap > 0 && cap < b.B) {
        std::vector<std::size_t> idx(cap);
        for (std::size_t i = 0; i < cap; ++i) idx[i] = i;
        b = b.select(idx);
    }
    return b;
}

// Fills in model.input_kind / model.obs_dim from the data when left on auto.
ModelConfig resolve_model_config(Config& c, std::size_t obs_dim, bool image) {
    if (c.get("model.input_kind") == "auto") c.set("model.input_kind", image ? "image" : "real");
    if (c.get_size("model.obs_dim") == 0) c.set("model.obs_dim", std::to_string(obs_dim));
    const ModelConfig mc = model_config_from(c);
    require(mc.obs_dim == obs_dim, "model.obs_dim = " + std::to_string(mc.obs_dim) +
                                       " does not match the data dimension " + std::to_string(obs_dim));
    store_model_config(c, mc);
    return mc;
}

Model model_from_checkpoint(Config& c, const std::string& key, const SequenceBatch& data) {
    const auto& p = c.get(key);
    require(!p.empty(), key + " is required (pass --checkpoint)");
    Checkpoint ck = load_checkpoint(p);
    require(ck.model_config.obs_dim == data.D,
            "checkpoint expects observations of dimension " + std::to_string(ck.model_config.obs_dim) + " but the " +
                data.kind + " data has dimension " + std::to_string(data.D));
    require((ck.model_config.input_kind == InputKind::image) == data.is_image(),
            "checkpoint input kind " + to_string(ck.model_config.input_kind) + " does not match the " + data.kind +
                " data");
    store_model_config(c, ck.model_config);
    return Model(ck.model_config, std::move(ck.params));
}

// 0 selects the per-dataset default: 10 observed steps for taxi trajectories,
// 2 for the synthetic sets.
std::size_t auto_prefix(std::size_t requested, const std::string& kind, std::size_t T) {
    const std::size_t p = requested != 0 ? requested : kind == "taxi" ? 10 : 2;
    require(p >= 1 && p < T, "prefix must lie in [1, " + std::to_string(T - 1) + "]");
    return p;
}

int cmd_datagen(Config& c, const fs::path& dir, std::ostream& out) {
    const auto& kind = checked_kind(c);
    require(kind != "taxi", "datagen supports four_modes and car_images");
    const SequenceBatch batch = generate_split(c, c.get_size("data.n"), kTrainStream);
    c.save(dir / "config.txt");
    const fs::path path = dir / "data.bin";
    write_dataset(path, batch, {{"seed", c.get("seed")}});
    out << "dataset=" << path.string() << "\nsequences=" << batch.B << "\nsteps=" << batch.T << '\n';
    return kExitOk;
}

int cmd_train(Config& c, const fs::path& dir, std::ostream& out, std::ostream& err) {
    const Splits data = training_data(c);
    TrainConfig tc = train_config_from(c);

    std::optional<Model> model;
    std::size_t start_epoch = 0;
    std::optional<Checkpoint> resume;
    if (const auto& r = c.get("train.resume"); !r.empty()) {
        resume = load_checkpoint(r);
        require(resume->model_config.obs_dim == data.train.D, "resume checkpoint does not match the data dimension");
        store_model_config(c, resume->model_config);
        model.emplace(resume->model_config, resume->params);
        start_epoch = resume->epoch;
    } else {
        model.emplace(resolve_model_config(c, data.train.D, data.train.is_image()), c.get_u64("seed"));
    }
    Optimizer opt(model->params(), tc);
    if (resume && resume->has_optimizer) opt.restore(resume->opt_steps, resume->opt_m, resume->opt_v);
    c.save(dir / "config.txt");

    const fs::path ck_path = dir / "checkpoint.bin";
    auto save = [&](const Model& m, const Optimizer& o, std::size_t epoch) {
        Checkpoint ck;
        ck.config_text = c.to_text();
        ck.model_config = m.config();
        ck.params = m.params();
        ck.epoch = epoch;
        ck.has_optimizer = true;
        ck.opt_steps = o.steps();
        ck.opt_m = o.first_moment();
        ck.opt_v = o.second_moment();
        save_checkpoint(ck_path, ck);
    };
    save(*model, opt, start_epoch);

    FitHooks hooks;
    hooks.on_epoch = [&](const EpochRecord& rec, const Model& m, const Optimizer& o) {
        save(m, o, rec.epoch);
        out << "epoch " << rec.epoch << " objective " << rec.train.objective;
        if (rec.has_val) out << " val " << rec.val.objective;
        out << '\n';
    };
    const History h = fit(*model, opt, data.train, data.val ? &*data.val : nullptr, tc, start_epoch, hooks);
    h.save(dir / "history.txt");
    out << "checkpoint=" << ck_path.string() << "\nparameters=" << model->parameter_count() << '\n';
    if (h.diverged) {
        err << "training diverged: " << h.message << '\n';
        return kExitNumeric;
    }
    return kExitOk;
}

std::set<std::string> parse_metrics(const std::string& list) {
    std::set<std::string> out;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.insert(item);
    }
    require(!out.empty(), "eval.metrics is empty");
    return out;
}

int cmd_eval(Config& c, const fs::path& dir, std::ostream& out) {
    const SequenceBatch data = test_data(c);
    const Model model = model_from_checkpoint(c, "eval.checkpoint", data);
    EvalOptions opt;
    opt.prefix = auto_prefix(c.get_size("eval.prefix"), data.kind, data.T);
    opt.samples = c.get_size("eval.samples");
    opt.switch_samples = c.get_size("eval.switch_samples");
    opt.anchors = c.get_size("eval.anchors");
    const auto& w = c.get("eval.wasserstein");
    require(w == "suffix" || w == "endpoint", "eval.wasserstein must be 'suffix' or 'endpoint'");
    opt.wasserstein = w == "suffix" ? WassersteinMode::suffix : WassersteinMode::endpoint;
    opt.seed = c.get_u64("seed");
    opt.metrics = parse_metrics(c.get("eval.metrics"));
    c.save(dir / "config.txt");

    EvalReport rep = evaluate(model, data, opt);
    rep.label = c.get("eval.label").empty() ? (model.config().switching ? "SRKN" : "RKN") : c.get("eval.label");
    rep.save(dir / "report.txt");
    rep.append_to_table(fs::path(c.get("out")) / "results.md");
    out << rep.to_text();
    return kExitOk;
}

int cmd_generate(Config& c, const fs::path& dir, std::ostream& out) {
    const SequenceBatch data = test_data(c);
    const Model model = model_from_checkpoint(c, "generate.checkpoint", data);
    const std::size_t anchor = c.get_size("generate.anchor");
    require(anchor < data.B, "generate.anchor is out of range");
    const std::size_t T = data.length(anchor), D = data.D;
    const std::size_t prefix = auto_prefix(c.get_size("generate.prefix"), data.kind, T);
    const std::size_t horizon = c.get_size("generate.horizon") == 0 ? T - prefix : c.get_size("generate.horizon");
    const std::size_t n = c.get_size("generate.n");
    c.save(dir / "config.txt");

    const auto xs = data.sequence(anchor);
    const Rollout r = model.rollout(filter_prefix(model, xs, prefix), horizon, n,
                                    sequence_stream(c.get_u64("seed"), prefix, xs));

    nlohmann::json doc;
    doc["kind"] = data.kind;
    doc["anchor"] = anchor;
    doc["obs_dim"] = D;
    doc["K"] = model.config().K;
    doc["prefix"] = nlohmann::json::array();
    for (std::size_t t = 0; t < prefix; ++t)
        doc["prefix"].push_back(std::vector<double>(xs.begin() + t * D, xs.begin() + (t + 1) * D));
    doc["samples"] = nlohmann::json::array();
    for (std::size_t i = 0; i < n; ++i) {
        nlohmann::json s;
        s["modes"] = r.modes[i];
        s["alphas"] = r.alphas[i];
        s["means"] = nlohmann::json::array();
        for (const auto& e : r.emissions[i]) s["means"].push_back(e.mean);
        doc["samples"].push_back(std::move(s));
    }
    write_file(dir / "rollouts.json", doc.dump(1) + "\n");

    const std::string title = data.kind + ": " + std::to_string(n) + " rollouts from a " + std::to_string(prefix) +
                              "-step prefix";
    if (data.is_image()) {
        TileFigure fig;
        fig.height = data.height;
        fig.width = data.width;
        fig.title = title;
        for (std::size_t t = 0; t < prefix; ++t)
            fig.prefix.emplace_back(xs.begin() + t * D, xs.begin() + (t + 1) * D);
        for (std::size_t i = 0; i < n; ++i) {
            fig.rollouts.emplace_back();
            for (const auto& e : r.emissions[i]) fig.rollouts.back().push_back(e.mean);
        }
        fig.modes = r.modes;
        write_file(dir / "rollouts.svg", tile_svg(fig));
    } else if (D == 2) {
        TrajectoryFigure fig;
        fig.title = title;
        for (std::size_t t = 0; t < prefix; ++t) fig.prefix.push_back({xs[2 * t], xs[2 * t + 1]});
        for (std::size_t i = 0; i < n; ++i) {
            fig.rollouts.emplace_back();
            for (const auto& e : r.emissions[i]) fig.rollouts.back().push_back({e.mean[0], e.mean[1]});
        }
        fig.modes = r.modes;
        write_file(dir / "rollouts.svg", trajectory_svg(fig));
    } else {
        out << "note=no figure for " << D << "-dimensional observations\n";
    }
    out << "rollouts=" << (dir / "rollouts.json").string() << '\n';
    return kExitOk;
}

int cmd_gradcheck(Config& c, const fs::path& dir, std::ostream& out, std::ostream& err) {
    const auto& kind = checked_kind(c);
    const std::size_t steps = c.get_size("gradcheck.steps");
    require(steps >= 1, "gradcheck.steps must be >= 1");
    SequenceBatch seq;
    if (kind == "car_images") {
        seq = gen_car_images(1, steps, derive_seed(c.get_u64("seed"), kTrainStream));
    } else {
        // Taxi observations are 2-d like the four-mode set.
        seq = gen_four_modes(1, derive_seed(c.get_u64("seed"), kTrainStream));
        require(steps <= seq.T, "gradcheck.steps exceeds the sequence length");
    }
    const Model model(resolve_model_config(c, seq.D, seq.is_image()), c.get_u64("seed"));
    c.save(dir / "config.txt");
    const GradCheckReport rep =
        grad_check(model, seq.sequence(0), steps, c.get_u64("seed"), c.get_double("gradcheck.eps"));
    std::ostringstream os;
    os.precision(6);
    for (const auto& g : rep.groups) os << g.name << " size=" << g.size << " rel_error=" << g.rel_error << '\n';
    os << "worst=" << rep.worst << " (" << rep.worst_group << ")\n";
    write_file(dir / "gradcheck.txt", os.str());
    out << os.str();
    if (!(rep.worst < c.get_double("gradcheck.tolerance"))) {
        err << "gradient check failed: worst relative error " << rep.worst << '\n';
        return kExitNumeric;
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Switching recurrent Kalman network: data generation, training, evaluation and sampling", "srkn"};
    app.require_subcommand(1);
    Flags flags;
    auto add_global = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "key=value configuration file");
        sub->add_option_function<std::uint64_t>(
            "--seed", [&](const std::uint64_t& v) { flags.seed = v; }, "root seed");
        sub->add_option_function<std::string>(
            "--out", [&](const std::string& v) { flags.out = v; }, "output root");
        sub->add_option("--set", flags.sets, "override one key, e.g. --set train.lr=1e-4")->take_all();
    };
    std::vector<std::pair<std::string, std::string>> conv;
    auto shortcut = [&](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
        return sub->add_option_function<std::string>(
            flag, [&conv, key](const std::string& v) { conv.emplace_back(key, v); }, help);
    };

    auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset");
    add_global(datagen);
    shortcut(datagen, "--kind", "data.kind", "four_modes or car_images")
        ->check(CLI::IsMember({"four_modes", "car_images"}));
    shortcut(datagen, "--n", "data.n", "number of sequences");
    shortcut(datagen, "--seq-len", "data.seq_len", "car sequence length");

    auto* train = app.add_subcommand("train", "fit a model");
    add_global(train);
    shortcut(train, "--data", "data.path", "dataset file (default: generate from data.kind)");
    shortcut(train, "--epochs", "train.epochs", "number of epochs");
    shortcut(train, "--resume", "train.resume", "checkpoint to continue from");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_global(eval);
    shortcut(eval, "--checkpoint", "eval.checkpoint", "checkpoint file");
    shortcut(eval, "--data", "data.test_path", "dataset file");
    shortcut(eval, "--metrics", "eval.metrics", "comma-separated subset of recon_ll,one_step,multi_step,w_dist");
    shortcut(eval, "--label", "eval.label", "row label in the results table");

    auto* generate = app.add_subcommand("generate", "sample continuations and plot them");
    add_global(generate);
    shortcut(generate, "--checkpoint", "generate.checkpoint", "checkpoint file");
    shortcut(generate, "--data", "data.test_path", "dataset file");
    shortcut(generate, "--n", "generate.n", "number of rollouts");
    shortcut(generate, "--prefix", "generate.prefix", "observed steps (0: dataset default)");
    shortcut(generate, "--horizon", "generate.horizon", "generated steps (0: to the end)");
    shortcut(generate, "--anchor", "generate.anchor", "index of the conditioning sequence");

    auto* gradcheck = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
    add_global(gradcheck);

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        Config c = resolve_config(flags);
        for (const auto& [key, value] : conv) c.set(key, value);
        const fs::path dir = make_run_dir(c);
        out << "run_dir=" << dir.string() << '\n';
        if (datagen->parsed()) return cmd_datagen(c, dir, out);
        if (train->parsed()) return cmd_train(c, dir, out, err);
        if (eval->parsed()) return cmd_eval(c, dir, out);
        if (generate->parsed()) return cmd_generate(c, dir, out);
        return cmd_gradcheck(c, dir, out, err);
    } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace srkn
