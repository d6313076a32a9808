#pragma once

// Experiment commands behind the lipsam tool. Each command reads a JSON
// config (unknown keys rejected before any work starts), writes CSV files
// into the output directory and returns a process exit code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "error.hpp"
#include "instance.hpp"
#include "lipschitz.hpp"
#include "modifier.hpp"
#include "network_io.hpp"
#include "pnp.hpp"
#include "signal.hpp"
#include "trainer.hpp"
#include "wav.hpp"

namespace lipsam::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitViolation = 2, kExitDivergence = 3 };

struct GlobalOptions {
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::filesystem::path out_dir = ".";
    std::ostream* out = &std::cout;
};

// ---------------------------------------------------------------------------
// Config access

/// Typed reads from a JSON object; `finish` rejects keys nobody asked for.
class ConfigReader {
public:
    explicit ConfigReader(nlohmann::json j, std::string path = "")
        : j_(j.is_null() ? nlohmann::json::object() : std::move(j)), path_(std::move(path)) {
        require(j_.is_object(), ErrorKind::Usage, "config" + where() + " must be a JSON object");
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        const auto it = j_.find(key);
        if (it == j_.end() || it->is_null()) return fallback;
        try {
            if constexpr (std::is_same_v<T, bool>) {
                require(it->is_boolean(), ErrorKind::Usage, "expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                require(it->is_number_integer(), ErrorKind::Usage, "expected an integer");
                if constexpr (std::is_unsigned_v<T>)
                    require(it->is_number_unsigned(), ErrorKind::Usage, "expected a non-negative integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                require(it->is_number(), ErrorKind::Usage, "expected a number");
            }
            return it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorKind::Usage, "config key '" + qualified(key) + "' has the wrong type");
        } catch (const Error& e) {
            throw Error(ErrorKind::Usage, "config key '" + qualified(key) + "': " + e.what());
        }
    }

    ConfigReader child(const std::string& key) {
        used_.insert(key);
        const auto it = j_.find(key);
        return ConfigReader(it == j_.end() ? nlohmann::json::object() : *it, qualified(key));
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            require(used_.count(key) > 0, ErrorKind::Usage, "unknown config key '" + qualified(key) + "'");
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return path_.empty() ? "" : " '" + path_ + "'"; }

    nlohmann::json j_;
    std::string path_;
    std::set<std::string> used_;
};

inline nlohmann::json load_config(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream f(path);
    require(f.good(), ErrorKind::Usage, "cannot open config " + path);
    try {
        return nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Usage, "config " + path + " is not valid JSON: " + e.what());
    }
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::Usage, "cannot write " + path.string());
    f << text;
}

inline std::string fixed(double v, int digits) {
    if (!std::isfinite(v)) return csv_number(v);
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

/// Relative output paths land in the output directory.
inline std::filesystem::path output_path(const GlobalOptions& g, const std::string& name) {
    const std::filesystem::path p(name);
    return p.is_absolute() ? p : g.out_dir / p;
}

inline std::uint64_t seed_or(const GlobalOptions& g, std::uint64_t config_seed) { return g.seed.value_or(config_seed); }

struct DenoiserSpec {
    std::string type = "soft-threshold";  // or "net"
    double tau = 0.1;
    std::string weights;
    std::string kind = "LipsAM-RE";

    static DenoiserSpec read(ConfigReader r) {
        DenoiserSpec d;
        d.type = r.get("type", d.type);
        d.tau = r.get("tau", d.tau);
        d.weights = r.get("weights", d.weights);
        d.kind = r.get("kind", d.kind);
        r.finish();
        require(d.type == "soft-threshold" || d.type == "net", ErrorKind::Usage,
                "denoiser.type must be 'soft-threshold' or 'net'");
        if (d.type == "net") require(!d.weights.empty(), ErrorKind::Usage, "denoiser.weights is required for a net");
        modifier_kind_from_string(d.kind);
        return d;
    }

    std::string name() const { return type == "soft-threshold" ? "soft-threshold" : kind; }

    ModifierArchitecture build() const {
        if (type == "soft-threshold") return ModifierArchitecture::soft_threshold(tau);
        auto net = read_weight_file(weights);
        const auto layout = net.layers.front().spatial_dims == 1 ? InputLayout::ChannelsAreBins
                                                                 : InputLayout::SingleChannelImage;
        return {modifier_kind_from_string(kind), AmplitudeMap(NetMap{std::move(net), layout})};
    }
};

/// Observation either from wav files or from the synthetic generator.
struct ProblemSpec {
    std::string observation, rir, reference;
    InstanceConfig instance;

    static ProblemSpec read(ConfigReader& r) {
        ProblemSpec p;
        p.observation = r.get("observation", p.observation);
        p.rir = r.get("rir", p.rir);
        p.reference = r.get("reference", p.reference);
        auto ir = r.child("instance");
        p.instance.length = ir.get("length", p.instance.length);
        p.instance.rir_taps = ir.get("rir_taps", p.instance.rir_taps);
        p.instance.rir_decay_seconds = ir.get("rir_decay_seconds", p.instance.rir_decay_seconds);
        p.instance.noise_snr_db = ir.get("noise_snr_db", p.instance.noise_snr_db);
        p.instance.seed = ir.get("seed", p.instance.seed);
        ir.finish();
        require(p.observation.empty() == p.rir.empty(), ErrorKind::Usage,
                "'observation' and 'rir' must be given together");
        require(p.observation.empty() || !r.has("instance"), ErrorKind::Usage,
                "give either wav inputs or a synthetic 'instance', not both");
        return p;
    }

    std::pair<Observation, std::optional<TimeSignal>> load() const {
        if (!observation.empty()) {
            std::optional<TimeSignal> ref;
            if (!reference.empty()) ref = wav::read(reference);
            return {Observation(wav::read(observation), wav::read(rir)), ref};
        }
        const auto inst = make_instance(instance);
        return {inst.observation, inst.clean};
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// validate-bounds

struct ValidateBoundsConfig {
    int restarts = 100;
    int max_iterations = 100;
    double learning_rate = 0.1;
    double termination_threshold = 5.0;
    int channels = 3;
    std::vector<double> scales{0.5, 1.0, 2.0, 4.0};
    std::vector<std::string> kinds{"AM-SE", "AM-RE", "LipsAM-SE", "LipsAM-RE"};
    std::vector<bool> constrained{true, false};
    std::uint64_t seed = 0;

    static ValidateBoundsConfig read(ConfigReader r) {
        ValidateBoundsConfig c;
        c.restarts = r.get("restarts", c.restarts);
        c.max_iterations = r.get("max_iterations", c.max_iterations);
        c.learning_rate = r.get("learning_rate", c.learning_rate);
        c.termination_threshold = r.get("termination_threshold", c.termination_threshold);
        c.channels = r.get("channels", c.channels);
        c.scales = r.get("scales", c.scales);
        c.kinds = r.get("kinds", c.kinds);
        c.constrained = r.get("constrained", c.constrained);
        c.seed = r.get("seed", c.seed);
        r.finish();
        require(!c.scales.empty() && !c.kinds.empty() && !c.constrained.empty(), ErrorKind::Usage,
                "scales, kinds and constrained must be non-empty");
        for (const auto& k : c.kinds) modifier_kind_from_string(k);
        require(c.channels > 0, ErrorKind::Usage, "channels must be positive");
        return c;
    }
};

inline int cmd_validate_bounds(const nlohmann::json& config, const GlobalOptions& g) {
    const auto cfg = ValidateBoundsConfig::read(ConfigReader(config));
    SearchConfig search;
    search.restarts = cfg.restarts;
    search.max_iterations = cfg.max_iterations;
    search.learning_rate = cfg.learning_rate;
    search.termination_threshold = cfg.termination_threshold;
    search.threads = g.threads;
    search.validate();
    const std::uint64_t seed = detail::seed_or(g, cfg.seed);

    std::ostringstream trials, summary;
    trials << "kind,constrained,scale,trial,B,iterations,terminated_early,bound,within_bound\n";
    summary << "kind,constrained,scale,bound,max_B,mean_B,terminated_early,trials,status\n";
    bool violated = false;
    std::uint64_t family_index = 0;
    for (const auto& kind_name : cfg.kinds) {
        for (bool constrained : cfg.constrained) {
            for (double scale : cfg.scales) {
                BFamily fam;
                fam.kind = modifier_kind_from_string(kind_name);
                fam.prototype = make_validation_net(scale, cfg.channels);
                fam.constrained = constrained;
                search.seed = seed * 1000003ULL + family_index++;
                const auto est = estimate_B(fam, default_parameter_sampler(), search);
                const auto bound = est.certified_upper;
                int early = 0;
                double sum = 0.0, worst = 0.0;
                bool ok = true;
                for (const auto& rec : est.records) {
                    const bool within = !bound || rec.best <= *bound + 0.01;
                    ok = ok && within;
                    early += rec.terminated_early ? 1 : 0;
                    sum += rec.best;
                    worst = std::max(worst, rec.best);
                    trials << kind_name << ',' << (constrained ? 1 : 0) << ',' << csv_number(scale) << ','
                           << rec.trial_id << ',' << csv_number(rec.best) << ',' << rec.iterations << ','
                           << (rec.terminated_early ? 1 : 0) << ','
                           << (bound ? detail::fixed(*bound, 6) : std::string("NaN")) << ','
                           << (bound ? (within ? "1" : "0") : "NaN") << '\n';
                }
                const char* status = !bound ? "unbounded" : ok ? "pass" : "fail";
                violated = violated || !ok;
                summary << kind_name << ',' << (constrained ? 1 : 0) << ',' << csv_number(scale) << ','
                        << (bound ? detail::fixed(*bound, 6) : std::string("NaN")) << ',' << csv_number(worst) << ','
                        << csv_number(sum / static_cast<double>(est.records.size())) << ',' << early << ','
                        << est.records.size() << ',' << status << '\n';
            }
        }
    }
    detail::write_file(g.out_dir / "bounds_trials.csv", trials.str());
    detail::write_file(g.out_dir / "bounds_summary.csv", summary.str());
    *g.out << summary.str();
    *g.out << (violated ? "FAIL: a LipsAM trial exceeded its bound\n" : "PASS: every LipsAM trial within its bound\n");
    return violated ? kExitViolation : kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainCommandConfig {
    TrainConfig train;
    SynthCorpusConfig corpus;
    std::size_t eval_items = 0;
    std::vector<double> eval_snr{20.0, 30.0, 40.0};
    std::string weights = "denoiser.lpsm";

    static TrainCommandConfig read(ConfigReader r) {
        TrainCommandConfig c;
        auto& t = c.train;
        t.epochs = r.get("epochs", t.epochs);
        t.batch_size = r.get("batch_size", t.batch_size);
        t.learning_rate = r.get("learning_rate", t.learning_rate);
        t.snr_low = r.get("snr_low", t.snr_low);
        t.snr_high = r.get("snr_high", t.snr_high);
        t.kind = modifier_kind_from_string(r.get<std::string>("kind", to_string(t.kind)));
        t.spectral = r.get("spectral", t.spectral);
        t.channel_width = r.get("channel_width", t.channel_width);
        t.kernel = r.get("kernel", t.kernel);
        t.layers = r.get("layers", t.layers);
        t.init_gain = r.get("init_gain", t.init_gain);
        t.validation_fraction = r.get("validation_fraction", t.validation_fraction);
        t.seed = r.get("seed", t.seed);
        c.corpus.item_count = r.get("items", c.corpus.item_count);
        c.corpus.seed = r.get("corpus_seed", c.corpus.seed);
        c.eval_items = r.get("eval_items", c.eval_items);
        c.eval_snr = r.get("eval_snr", c.eval_snr);
        c.weights = r.get("weights", c.weights);
        r.finish();
        require(!c.weights.empty(), ErrorKind::Usage, "weights must name a file");
        t.validate();
        c.corpus.validate();
        return c;
    }
};

inline int cmd_train(const nlohmann::json& config, const GlobalOptions& g) {
    auto cfg = TrainCommandConfig::read(ConfigReader(config));
    cfg.train.seed = detail::seed_or(g, cfg.train.seed);
    cfg.train.threads = g.threads;
    std::ostringstream log;
    const auto res = train_denoiser(cfg.train, cfg.corpus, std::nullopt, &log);
    const auto weights = detail::output_path(g, cfg.weights);
    std::filesystem::create_directories(weights.parent_path().empty() ? "." : weights.parent_path());
    write_weight_file(weights.string(), res.net);
    detail::write_file(g.out_dir / "train_log.csv", log.str());
    *g.out << "best epoch " << res.best_epoch << ", validation loss " << csv_number(res.best_val_loss) << " dB\n";

    if (cfg.eval_items > 0 && res.status == TrainStatus::Ok) {
        auto eval_corpus = cfg.corpus;
        eval_corpus.item_count = cfg.eval_items;
        eval_corpus.seed = cfg.corpus.seed + 0x9e3779b9ULL;
        std::vector<TimeSignal> items;
        for (std::size_t i = 0; i < cfg.eval_items; ++i) items.push_back(synth_speechlike(eval_corpus, i));
        const ModifierArchitecture am(cfg.train.kind, AmplitudeMap(NetMap{res.net, InputLayout::ChannelsAreBins}));
        const auto lips =
            am.with_kind(cfg.train.kind == ModifierKind::AM_SE ? ModifierKind::LipsAM_SE : ModifierKind::LipsAM_RE);
        std::ostringstream ev;
        ev << "wrapper,input_snr,output_snr,output_si_snr,items\n";
        for (const auto* arch : {&am, &lips}) {
            for (const auto& row : evaluate_denoiser(*arch, items, cfg.eval_snr, cfg.train.stft, cfg.train.seed))
                ev << to_string(arch->kind()) << ',' << csv_number(row.input_snr) << ',' << csv_number(row.output_snr)
                   << ',' << csv_number(row.output_si_snr) << ',' << row.items << '\n';
        }
        detail::write_file(g.out_dir / "evaluation.csv", ev.str());
        *g.out << ev.str();
    }
    if (res.status == TrainStatus::Poisoned) {
        std::cerr << "training stopped: " << res.message << '\n';
        return kExitDivergence;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// dereverb and sweep-lambda

inline int cmd_dereverb(const nlohmann::json& config, const GlobalOptions& g) {
    ConfigReader r(config);
    SolverConfig solver;
    solver.lambda = r.get("lambda", solver.lambda);
    solver.max_iterations = r.get("iterations", solver.max_iterations);
    const auto output = r.get<std::string>("output", "dereverbed.wav");
    const auto trace_name = r.get<std::string>("trace", "trace.csv");
    const auto denoiser = detail::DenoiserSpec::read(r.child("denoiser"));
    auto problem = detail::ProblemSpec::read(r);
    if (g.seed) problem.instance.seed = *g.seed;
    r.finish();
    solver.validate();

    const auto arch = denoiser.build();
    const auto [obs, reference] = problem.load();
    const auto res = run(obs, arch, solver, reference);
    std::ostringstream trace;
    write_trace_csv(trace, res);
    detail::write_file(detail::output_path(g, trace_name), trace.str());
    wav::write(detail::output_path(g, output).string(), TimeSignal(res.x_hat, obs.y.sample_rate()),
               wav::SampleFormat::Float32);
    *g.out << denoiser.name() << " lambda " << csv_number(solver.lambda) << ": " << to_string(res.status) << " after "
           << res.iterations << " iterations";
    if (reference && !res.diverged())
        *g.out << ", SI-SNR " << csv_number(si_snr(obs.y, *reference), 6) << " -> "
               << csv_number(si_snr(TimeSignal(res.x_hat, obs.y.sample_rate()), *reference), 6) << " dB";
    *g.out << '\n';
    if (res.diverged()) {
        std::cerr << res.message << '\n';
        return kExitDivergence;
    }
    return kExitOk;
}

inline int cmd_sweep_lambda(const nlohmann::json& config, const GlobalOptions& g) {
    ConfigReader r(config);
    SolverConfig solver;
    solver.max_iterations = r.get("iterations", 200);
    const auto grid = parse_lambda_grid(r.get<std::string>("grid", "1e-3:1e2:26log"));
    const auto denoiser = detail::DenoiserSpec::read(r.child("denoiser"));
    auto problem = detail::ProblemSpec::read(r);
    if (g.seed) problem.instance.seed = *g.seed;
    r.finish();
    solver.validate();

    const auto arch = denoiser.build();
    const auto [obs, reference] = problem.load();
    require(reference.has_value(), ErrorKind::Usage, "sweep-lambda needs a reference signal");
    const auto rows = lambda_sweep(obs, arch, grid, solver, *reference);
    std::ostringstream csv;
    write_sweep_csv(csv, rows, denoiser.name());
    detail::write_file(g.out_dir / "sweep.csv", csv.str());
    *g.out << csv.str();
    const bool any_diverged =
        std::any_of(rows.begin(), rows.end(), [](const SweepRow& row) { return row.status == RunStatus::Diverged; });
    return any_diverged ? kExitDivergence : kExitOk;
}

// ---------------------------------------------------------------------------
// certify

/// Local Lipschitz constants ||J_D(z)|| at random inputs of a saved modifier,
/// plus a pairwise quotient search on small grids, against the certified bound.
inline int cmd_certify(const nlohmann::json& config, const GlobalOptions& g) {
    ConfigReader r(config);
    const auto weights = r.get<std::string>("weights", "");
    const auto kind = modifier_kind_from_string(r.get<std::string>("kind", "LipsAM-RE"));
    const int samples = r.get("samples", 16);
    const std::size_t frames = r.get<std::size_t>("frames", 8);
    std::size_t bins = r.get<std::size_t>("bins", 0);
    SearchConfig search;
    search.restarts = r.get("pairwise_restarts", 4);
    search.max_iterations = r.get("pairwise_iterations", 100);
    const std::uint64_t seed = detail::seed_or(g, r.get<std::uint64_t>("seed", 0));
    r.finish();
    require(!weights.empty(), ErrorKind::Usage, "certify needs 'weights'");
    require(samples > 0 && frames > 0, ErrorKind::Usage, "samples and frames must be positive");
    search.seed = seed;
    search.threads = g.threads;

    auto net = read_weight_file(weights);
    const bool conv1d = net.layers.front().spatial_dims == 1;
    if (conv1d) bins = static_cast<std::size_t>(net.layers.front().in_channels);
    else if (bins == 0) bins = 4;
    const Grid grid{bins, frames};
    const ModifierArchitecture arch(kind, AmplitudeMap(NetMap{std::move(net), conv1d ? InputLayout::ChannelsAreBins
                                                                                     : InputLayout::SingleChannelImage}));
    std::optional<double> bound;
    if (is_lipschitz_variant(kind) && arch.inner().certified_bound()) bound = theoretical_bound(arch);

    std::ostringstream csv;
    const std::string bound_cell = bound ? csv_number(*bound) : std::string("NaN");
    csv << "trial_id,architecture,method,empirical_B,theoretical_bound\n";
    double lower = 0.0;
    for (int t = 0; t < samples; ++t) {
        auto rng = trial_rng(seed, static_cast<std::uint64_t>(t));
        const double level = std::pow(10.0, std::uniform_real_distribution<double>(-2.0, 1.0)(rng));
        std::normal_distribution<double> normal(0.0, level);
        std::vector<cd> z(grid.size());
        for (auto& v : z) v = cd(normal(rng), normal(rng));
        const double v = modifier_jacobian_norm(arch, z, grid);
        lower = std::max(lower, v);
        csv << t << ',' << to_string(kind) << ",jacobian," << csv_number(v) << ',' << bound_cell << '\n';
    }
    if (grid.size() <= 64 && search.restarts > 0) {
        search.validate();
        const auto est = pairwise_quotient_search(modifier_map(arch, grid), search);
        for (const auto& rec : est.records)
            csv << samples + rec.trial_id << ',' << to_string(kind) << ",pairwise," << csv_number(rec.best) << ','
                << bound_cell << '\n';
        lower = std::max(lower, est.empirical_lower);
    }
    const bool violated = bound && lower > *bound * (1.0 + 1e-9);
    std::ostringstream summary;
    summary << "kind,bins,frames,empirical_lower,certified_upper,status\n"
            << to_string(kind) << ',' << bins << ',' << frames << ',' << csv_number(lower) << ','
            << bound_cell << ','
            << (!bound ? "uncertified" : violated ? "violated" : "certified") << '\n';
    detail::write_file(g.out_dir / "certify.csv", csv.str());
    detail::write_file(g.out_dir / "certify_summary.csv", summary.str());
    *g.out << summary.str();
    return violated ? kExitViolation : kExitOk;
}

// ---------------------------------------------------------------------------
// selfcheck

enum class Fault { None, WindowNormalization };

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

namespace detail {

template <class Fn>
CheckResult run_check(const std::string& name, double tolerance, Fn&& fn) {
    CheckResult c{name, false, std::numeric_limits<double>::quiet_NaN(), tolerance, ""};
    try {
        c.value = fn(c.detail);
        c.passed = c.value <= tolerance;
    } catch (const std::exception& e) {
        c.detail = e.what();
    }
    return c;
}

}  // namespace detail

inline std::vector<CheckResult> selfcheck_suite(std::uint64_t seed, Fault fault = Fault::None) {
    std::vector<CheckResult> out;
    StftConfig stft;
    if (fault == Fault::WindowNormalization)
        for (auto& w : stft.window) w *= 1.01;
    auto noise = [&](std::size_t n, std::uint64_t k) {
        auto rng = trial_rng(seed, k);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> v(n);
        for (auto& x : v) x = normal(rng);
        return v;
    };

    out.push_back(detail::run_check("stft_roundtrip", 1e-10, [&](std::string&) {
        double worst = 0.0;
        for (std::uint64_t k = 0; k < 20; ++k) {
            const TimeSignal x(noise(4096, k));
            const auto back = istft(lipsam::stft(x, stft), stft);
            for (std::size_t t = 0; t < x.size(); ++t) worst = std::max(worst, std::abs(back[t] - x[t]));
        }
        return worst;
    }));
    out.push_back(detail::run_check("parseval", 1e-9, [&](std::string&) {
        double worst = 0.0;
        for (std::uint64_t k = 20; k < 40; ++k) {
            const TimeSignal x(noise(4096, k));
            const auto Z = lipsam::stft(x, stft);
            double e = 0.0;
            for (const auto& v : Z.values) e += std::norm(v);
            worst = std::max(worst, std::abs(e - energy(x.samples())) / energy(x.samples()));
        }
        return worst;
    }));
    out.push_back(detail::run_check("prox_closed_form", 1e-8, [&](std::string&) {
        // Minimizes (1/2 lambda) t^2 + (1/2)(t - w)^2 per sample by bisection on its derivative.
        const std::size_t T = 64;
        const Observation obs(TimeSignal(noise(T, 41)), TimeSignal(noise(8, 42)));
        const StftConfig small = StftConfig::tight_hann(16, 8);
        auto s = AdmmState::initial(obs, small);
        s.x = TimeSignal(noise(T, 43));
        s.xi1 = TimeSignal(noise(T, 44));
        const auto hx = circular_convolve(s.x, obs.h);
        double worst = 0.0;
        for (double lambda : {1e-3, 1.0, 1e2}) {
            const auto u = u_update(s, obs, lambda);
            for (std::size_t t = 0; t < T; ++t) {
                const double w = hx[t] + s.xi1[t] - obs.y[t];
                auto slope = [&](double v) { return v / lambda + (v - w); };
                double a = -std::abs(w) - 1.0, b = std::abs(w) + 1.0;
                for (int i = 0; i < 200; ++i) {
                    const double m = 0.5 * (a + b);
                    if (slope(m) > 0.0) b = m;
                    else a = m;
                }
                worst = std::max(worst, std::abs(u[t] - obs.y[t] - 0.5 * (a + b)));
            }
        }
        return worst;
    }));
    out.push_back(detail::run_check("fft_inversion", 1e-8, [&](std::string&) {
        // (H^T H + I) x = r against a dense solve with the explicit circulant.
        const std::size_t T = 64;
        const TimeSignal h = zero_pad(TimeSignal(noise(12, 50)), T);
        const auto r = noise(T, 51);
        Eigen::MatrixXd H(T, T);
        for (std::size_t i = 0; i < T; ++i)
            for (std::size_t j = 0; j < T; ++j) H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h[(i + T - j) % T];
        const Eigen::MatrixXd M = H.transpose() * H + Eigen::MatrixXd::Identity(T, T);
        const Eigen::VectorXd dense = M.ldlt().solve(Eigen::Map<const Eigen::VectorXd>(r.data(), T));
        const auto fast = apply_inverse_filter(TimeSignal(r), precompute_inverse_filter(h, T));
        double worst = 0.0;
        for (std::size_t t = 0; t < T; ++t) worst = std::max(worst, std::abs(fast[t] - dense(static_cast<Eigen::Index>(t))));
        return worst;
    }));
    for (const auto& [eps, label] : {std::pair{1.0, "1"}, std::pair{1e-3, "1e-3"}, std::pair{1e-6, "1e-6"}}) {
        out.push_back(detail::run_check(std::string("counterexample_bias(") + label + ")", 1e-9, [&](std::string& d) {
            const double q = counterexample_bias(eps);
            d = detail::fixed(q, 1);
            return std::abs(q - (eps + 1.0) / eps) / ((eps + 1.0) / eps);
        }));
        out.push_back(detail::run_check(std::string("counterexample_permutation(") + label + ")", 1e-9, [&](std::string& d) {
            const double q = counterexample_permutation(eps);
            d = detail::fixed(q, 1);
            return std::abs(q - 1.0 / eps) * eps;
        }));
    }
    return out;
}

inline int cmd_selfcheck(const nlohmann::json& config, const GlobalOptions& g, Fault fault = Fault::None) {
    ConfigReader r(config);
    const std::uint64_t seed = detail::seed_or(g, r.get<std::uint64_t>("seed", 0));
    r.finish();
    const auto checks = selfcheck_suite(seed, fault);
    std::ostringstream csv;
    csv << "check,status,value,tolerance,detail\n";
    bool ok = true;
    for (const auto& c : checks) {
        ok = ok && c.passed;
        *g.out << (c.passed ? "PASS " : "FAIL ") << c.name << " value=" << csv_number(c.value, 6)
               << " tol=" << csv_number(c.tolerance) << (c.detail.empty() ? "" : " " + c.detail) << '\n';
        std::string detail = c.detail;
        std::replace(detail.begin(), detail.end(), ',', ';');
        csv << c.name << ',' << (c.passed ? "pass" : "fail") << ',' << csv_number(c.value) << ','
            << csv_number(c.tolerance) << ',' << detail << '\n';
    }
    detail::write_file(g.out_dir / "selfcheck.csv", csv.str());
    return ok ? kExitOk : kExitViolation;
}

}  // namespace lipsam::cli
