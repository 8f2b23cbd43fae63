#pragma once

// Command-line front end: restoration runs for the five models and
// multi-scheme comparisons. Parsing uses CLI11; everything else is callable
// in-process so it can be tested without spawning the executable.
//
// Exit codes: 0 converged (or stalled), 2 step budget exhausted, 1 error.

#include "dgflow/dgflow.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dgflow::cli {

enum class Subcommand { Denoise, Deblur, Inpaint, DenoiseColor, Tvp };

inline const char* to_string(Subcommand s)
{
    switch (s) {
    case Subcommand::Denoise: return "denoise";
    case Subcommand::Deblur: return "deblur";
    case Subcommand::Inpaint: return "inpaint";
    case Subcommand::DenoiseColor: return "denoise-color";
    case Subcommand::Tvp: return "tvp";
    }
    return "?";
}

inline constexpr int exit_converged = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_max_steps = 2;

// A run or compare invocation failed at a named stage (reading input, building
// the model, integrating, writing results).
class StageError : public std::runtime_error
{
public:
    StageError(std::string stage, const std::string& what)
        : std::runtime_error(what), stage_(std::move(stage))
    {
    }
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct RunConfig
{
    Subcommand model = Subcommand::Denoise;
    double alpha = 0.05;
    double beta = 0.001;
    double p = 0.8; // tvp only

    Method scheme = Method::Gonzalez;
    double tau = 2.5;
    bool adaptive = false;
    double tau_min = 1e-7;
    double tau_max = 1e3;
    bool lagged_fixed_point = false;

    std::size_t max_steps = 1000;
    double grad_tol = 1e-6;
    double stall_eps = 0.0;
    double tol = 1e-8;
    std::size_t quad_order = 4;

    std::string input;         // empty: synthetic shapes fixture
    std::size_t fixture_width = 32;
    std::size_t fixture_height = 32;
    double sigma = 0.1;        // noise level in unit intensities
    std::uint64_t seed = 1;
    std::string init = "data"; // data | random
    Scaling scaling = Scaling::Unit;

    std::string mask;          // inpaint: PGM path or "strokes"
    std::string kernel;        // deblur: "box7" or a matrix file
    bool blur_input = false;   // deblur: observe K u + noise instead of u + noise

    std::string output;
    std::string trace;
    unsigned maxval = 255;
    bool timing = false;       // wall_ms column; zero otherwise so traces are reproducible
};

// Reference parameter sets per experiment.
inline RunConfig defaults(Subcommand s)
{
    RunConfig c;
    c.model = s;
    switch (s) {
    case Subcommand::Denoise:
    case Subcommand::Deblur: break;
    case Subcommand::Inpaint:
        c.alpha = 1e-4;
        c.beta = 0.01;
        c.scheme = Method::ItohAbe;
        c.tau = 1.0;
        c.adaptive = true;
        break;
    case Subcommand::DenoiseColor:
        c.alpha = 100.0;
        c.beta = 1.0;
        c.tau = 0.2;
        c.scaling = Scaling::Byte;
        break;
    case Subcommand::Tvp:
        c.scheme = Method::ItohAbe;
        c.tau = 1.0;
        c.adaptive = true;
        break;
    }
    return c;
}

inline Method parse_method(const std::string& name)
{
    for (Method m : {Method::Gonzalez, Method::MeanValue, Method::ItohAbe, Method::Euler, Method::Lagged})
        if (name == to_string(m)) return m;
    throw std::invalid_argument("unknown scheme '" + name + "'");
}

inline Subcommand parse_subcommand(const std::string& name)
{
    for (Subcommand s : {Subcommand::Denoise, Subcommand::Deblur, Subcommand::Inpaint, Subcommand::DenoiseColor,
                         Subcommand::Tvp})
        if (name == to_string(s)) return s;
    throw std::invalid_argument("unknown model '" + name + "'");
}

inline std::string format_number(double v)
{
    std::string s;
    detail::append_number(s, v);
    return s;
}

// ---------------------------------------------------------------------------

struct Problem
{
    FunctionalModel model;
    ImageGrid initial;
};

inline void check_config(const RunConfig& c)
{
    const bool inpaint = c.model == Subcommand::Inpaint, deblur = c.model == Subcommand::Deblur;
    if (inpaint && c.mask.empty()) throw std::invalid_argument("inpaint requires --mask");
    if (!inpaint && !c.mask.empty()) throw std::invalid_argument("--mask is only valid for inpaint");
    if (deblur && c.kernel.empty()) throw std::invalid_argument("deblur requires --kernel");
    if (!deblur && (!c.kernel.empty() || c.blur_input))
        throw std::invalid_argument("--kernel and --blur-input are only valid for deblur");
    if (!(c.alpha > 0.0) || !(c.beta > 0.0)) throw std::invalid_argument("alpha and beta must be positive");
    if (!(c.sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    if (!(c.grad_tol >= 0.0) || !(c.stall_eps >= 0.0) || !(c.tol > 0.0))
        throw std::invalid_argument("tolerances must be non-negative (tol positive)");
    if (c.quad_order == 0) throw std::invalid_argument("quadrature order must be at least 1");
    if (c.init != "data" && c.init != "random") throw std::invalid_argument("--init must be data or random");
    if (c.maxval != 255 && c.maxval != 65535) throw std::invalid_argument("--maxval must be 255 or 65535");
    if (c.scheme == Method::Lagged && c.model != Subcommand::Denoise && c.model != Subcommand::Inpaint)
        throw std::invalid_argument("lagged diffusivity is available for denoise and inpaint only");
    StepController{c.adaptive ? StepMode::Adaptive : StepMode::Fixed, c.tau, c.tau_min, c.tau_max}.validate();
}

inline Kernel load_kernel(const std::string& spec)
{
    if (spec == "box7") return Kernel::box(7);
    return read_kernel(spec);
}

inline Mask load_mask(const std::string& spec, std::size_t w, std::size_t h)
{
    if (spec == "strokes") return stroke_mask(w, h);
    return read_mask(spec);
}

// Builds the energy and the initial state. Throws StageError naming the stage.
inline Problem prepare(const RunConfig& c)
{
    try {
        check_config(c);
    } catch (const std::exception& e) {
        throw StageError("config", e.what());
    }

    const double range = scaling_range(c.scaling);
    ImageGrid clean;
    try {
        if (c.input.empty()) {
            clean = shapes_image(c.fixture_width, c.fixture_height, c.model == Subcommand::DenoiseColor ? 3 : 1);
            clean *= range;
        } else {
            clean = read_image(c.input, c.scaling);
        }
    } catch (const std::exception& e) {
        throw StageError("read input", e.what());
    }

    try {
        const bool color = c.model == Subcommand::DenoiseColor;
        if (color && clean.channels() < 2) throw std::invalid_argument("denoise-color needs a colour (PPM) image");
        if (!color && clean.channels() != 1)
            throw std::invalid_argument(std::string(to_string(c.model)) + " needs a grayscale (PGM) image");

        std::optional<Kernel> kernel;
        if (c.model == Subcommand::Deblur) kernel = load_kernel(c.kernel);

        ImageGrid data = clean;
        if (c.blur_input) data = ReflectConvolution(data.width(), data.height(), *kernel).apply(data);
        data += synth_noise(data.shape(), c.sigma * range, c.seed);

        ImageGrid initial = c.init == "random" ? uniform_field(data.shape(), 0.0, range, c.seed) : data;

        switch (c.model) {
        case Subcommand::Denoise: return {FunctionalModel::denoise(std::move(data), c.alpha, c.beta), initial};
        case Subcommand::Deblur:
            return {FunctionalModel::deblur(std::move(data), std::move(*kernel), c.alpha, c.beta), initial};
        case Subcommand::Inpaint: {
            Mask mask = load_mask(c.mask, data.width(), data.height());
            return {FunctionalModel::inpaint(std::move(data), std::move(mask), c.alpha, c.beta), initial};
        }
        case Subcommand::DenoiseColor:
            return {FunctionalModel::multichannel(std::move(data), c.alpha, c.beta), initial};
        case Subcommand::Tvp: return {FunctionalModel::tvp(std::move(data), c.alpha, c.beta, c.p), initial};
        }
        throw std::invalid_argument("unknown model");
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError("build model", e.what());
    }
}

inline StepController controller(const RunConfig& c)
{
    return c.adaptive ? StepController::adaptive(c.tau, c.tau_min, c.tau_max)
                      : StepController::fixed(c.tau, c.tau_min, c.tau_max);
}

inline FlowResult integrate(const RunConfig& c, const Problem& prob)
{
    FlowOptions opt;
    opt.record_time = c.timing;
    opt.step.tol = c.tol;
    opt.step.quadrature_order = c.quad_order;
    opt.step.lagged_fixed_point = c.lagged_fixed_point;
    const StopCriteria stop{c.max_steps, c.grad_tol, c.stall_eps};
    return run_flow(prob.model, c.scheme, controller(c), stop, prob.initial, opt);
}

inline int exit_code(StopReason r)
{
    switch (r) {
    case StopReason::Converged:
    case StopReason::Stalled: return exit_converged;
    case StopReason::MaxSteps: return exit_max_steps;
    case StopReason::Failed: return exit_error;
    }
    return exit_error;
}

inline std::string summary_line(const FlowResult& r)
{
    const auto& last = r.trace.rows.back();
    return "final_energy=" + format_number(last.energy) + " steps=" + std::to_string(last.step) +
           " grad_norm=" + format_number(last.grad_norm);
}

inline void report(std::ostream& err, const StageError& e)
{
    err << "dgflow: error [" << e.stage() << "]: " << e.what() << '\n';
}

// One restoration run. Writes the image and the trace when paths are given,
// prints the summary line, and returns the exit code.
inline int run(const RunConfig& c, std::ostream& out, std::ostream& err)
{
    try {
        const Problem prob = prepare(c);
        const FlowResult res = integrate(c, prob);
        try {
            if (!c.trace.empty()) write_trace(c.trace, res.trace);
            if (!c.output.empty()) write_image(c.output, res.final_state, c.maxval, c.scaling);
        } catch (const std::exception& e) {
            throw StageError("write output", e.what());
        }
        out << summary_line(res) << '\n';
        if (res.reason == StopReason::Failed) throw StageError("flow", res.error);
        return exit_code(res.reason);
    } catch (const StageError& e) {
        report(err, e);
        return exit_error;
    }
}

// ---------------------------------------------------------------------------

// "name", "name:tau" or "name:tau:adaptive".
struct SchemeSpec
{
    Method method = Method::Gonzalez;
    std::optional<double> tau;
    bool adaptive = false;

    std::string label() const
    {
        std::string s = to_string(method);
        if (tau) s += "_tau" + format_number(*tau);
        if (adaptive) s += "_adaptive";
        return s;
    }
};

inline SchemeSpec parse_scheme_spec(const std::string& text)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto colon = text.find(':', start);
        parts.push_back(text.substr(start, colon == std::string::npos ? std::string::npos : colon - start));
        if (colon == std::string::npos) break;
        start = colon + 1;
    }
    if (parts.size() > 3) throw std::invalid_argument("scheme spec '" + text + "' has too many fields");
    SchemeSpec s;
    s.method = parse_method(parts[0]);
    if (parts.size() >= 2) {
        double t = 0.0;
        const auto& f = parts[1];
        auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), t);
        if (ec != std::errc() || p != f.data() + f.size() || !(t > 0.0))
            throw std::invalid_argument("scheme spec '" + text + "': bad step size");
        s.tau = t;
    }
    if (parts.size() == 3) {
        if (parts[2] != "adaptive") throw std::invalid_argument("scheme spec '" + text + "': expected 'adaptive'");
        s.adaptive = true;
    }
    return s;
}

struct CompareConfig
{
    RunConfig base;
    std::vector<SchemeSpec> schemes;
    std::string out_dir;
};

inline constexpr std::string_view summary_header = "index,scheme,tau,adaptive,final_energy,steps,grad_norm,reason";

// Runs every scheme for exactly base.max_steps steps from the same initial
// state (gradient and stall stopping disabled), so all traces share the step
// grid. Writes trace_<index>_<label>.csv per scheme and summary.csv.
inline int compare(const CompareConfig& cc, std::ostream& out, std::ostream& err)
{
    try {
        if (cc.schemes.size() < 2) throw StageError("config", "compare needs at least two schemes");
        if (cc.out_dir.empty()) throw StageError("config", "compare requires --out-dir");

        std::vector<RunConfig> runs;
        for (const auto& s : cc.schemes) {
            RunConfig c = cc.base;
            c.scheme = s.method;
            if (s.tau) c.tau = *s.tau;
            c.adaptive = s.adaptive;
            c.grad_tol = 0.0;
            c.stall_eps = 0.0;
            c.output.clear();
            c.trace.clear();
            runs.push_back(c);
        }
        const Problem prob = prepare(runs.front());
        for (const auto& c : runs) {
            try {
                check_config(c);
            } catch (const std::exception& e) {
                throw StageError("config", e.what());
            }
        }

        try {
            std::filesystem::create_directories(cc.out_dir);
        } catch (const std::exception& e) {
            throw StageError("write output", e.what());
        }

        std::string summary(summary_header);
        summary += '\n';
        bool failed = false;
        for (std::size_t k = 0; k < runs.size(); ++k) {
            const FlowResult res = integrate(runs[k], prob);
            const auto& last = res.trace.rows.back();
            const std::string label = cc.schemes[k].label();
            try {
                write_trace((std::filesystem::path(cc.out_dir) / ("trace_" + std::to_string(k) + "_" + label + ".csv"))
                                .string(),
                            res.trace);
            } catch (const std::exception& e) {
                throw StageError("write output", e.what());
            }
            summary += std::to_string(k) + "," + to_string(runs[k].scheme) + "," + format_number(runs[k].tau) + "," +
                       (runs[k].adaptive ? "1" : "0") + "," + format_number(last.energy) + "," +
                       std::to_string(last.step) + "," + format_number(last.grad_norm) + "," + to_string(res.reason) +
                       "\n";
            out << label << ": " << summary_line(res) << '\n';
            if (res.reason == StopReason::Failed) {
                err << "dgflow: error [flow]: " << label << ": " << res.error << '\n';
                failed = true;
            }
        }
        try {
            detail::write_file((std::filesystem::path(cc.out_dir) / "summary.csv").string(), summary);
        } catch (const std::exception& e) {
            throw StageError("write output", e.what());
        }
        return failed ? exit_error : exit_converged;
    } catch (const StageError& e) {
        report(err, e);
        return exit_error;
    }
}

// ---------------------------------------------------------------------------
// Argument parsing. Model-dependent defaults are applied after parsing, so
// every option is optional at the CLI11 level.

struct RawOptions
{
    std::optional<double> alpha, beta, p, tau, tau_min, tau_max, sigma, grad_tol, stall_eps, tol;
    std::optional<std::size_t> max_steps, quad_order;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> scheme, scaling, init, fixture;
    std::optional<unsigned> maxval;
    bool adaptive = false, fixed = false, lagged_fixed_point = false, blur_input = false, timing = false;
    std::string input, output, trace, mask, kernel;

    std::string model;        // compare only
    std::vector<std::string> schemes;
    std::string out_dir;
};

inline void add_common_options(CLI::App* app, RawOptions& o, bool per_run)
{
    app->add_option("--input", o.input, "input PGM/PPM image (default: synthetic shapes fixture)");
    app->add_option("--fixture", o.fixture, "synthetic fixture size WxH (default 32x32)");
    app->add_option("--sigma", o.sigma, "Gaussian noise level in unit intensities (default 0.1, 0 with --input)");
    app->add_option("--seed", o.seed, "seed for noise and random initialisation (default 1)");
    app->add_option("--init", o.init, "initial state: data or random")->check(CLI::IsMember({"data", "random"}));
    app->add_option("--scaling", o.scaling, "intensity range: unit [0,1] or byte [0,255]")
        ->check(CLI::IsMember({"unit", "byte"}));
    app->add_option("--alpha", o.alpha, "regularisation weight");
    app->add_option("--beta", o.beta, "TV smoothing parameter");
    app->add_option("--p", o.p, "TV^p exponent in (0,1) (tvp)");
    app->add_option("--mask", o.mask, "inpainting domain: PGM (nonzero = missing) or 'strokes' (inpaint)");
    app->add_option("--kernel", o.kernel, "blur kernel: 'box7' or a matrix file (deblur)");
    app->add_flag("--blur-input", o.blur_input, "blur the input with the kernel before adding noise (deblur)");
    if (per_run) {
        app->add_option("--scheme", o.scheme, "gonzalez, meanvalue, itoh-abe, euler or lagged")
            ->check(CLI::IsMember({"gonzalez", "meanvalue", "itoh-abe", "euler", "lagged"}));
        app->add_option("--tau", o.tau, "step size (initial step size when adaptive)");
        app->add_flag("--adaptive", o.adaptive, "tau/2tau adaptive step control");
        app->add_flag("--fixed", o.fixed, "fixed step size")->excludes("--adaptive");
        app->add_option("--output", o.output, "restored image path");
        app->add_option("--trace", o.trace, "energy trace CSV path");
        app->add_option("--maxval", o.maxval, "output maxval, 255 or 65535");
        app->add_option("--grad-tol", o.grad_tol, "stop when |grad V| <= grad-tol * (1 + |grad V(x0)|)");
        app->add_option("--stall-eps", o.stall_eps, "stop when V drops less than this over 10 steps (0 disables)");
    }
    app->add_option("--tau-min", o.tau_min, "lower step-size bound");
    app->add_option("--tau-max", o.tau_max, "upper step-size bound");
    app->add_option("--max-steps", o.max_steps, "step budget");
    app->add_option("--tol", o.tol, "inner solver tolerance");
    app->add_option("--quad-order", o.quad_order, "Gauss-Legendre points for the mean-value scheme");
    app->add_flag("--lagged-fixed-point", o.lagged_fixed_point, "lagged diffusivity without the 1/tau term");
    app->add_flag("--timing", o.timing, "record wall-clock time in the trace");
}

inline void parse_fixture(const std::string& text, RunConfig& c)
{
    const auto x = text.find('x');
    auto number = [&](std::string_view s) {
        std::size_t v = 0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size() || v == 0)
            throw std::invalid_argument("--fixture expects WxH, got '" + text + "'");
        return v;
    };
    if (x == std::string::npos) throw std::invalid_argument("--fixture expects WxH, got '" + text + "'");
    c.fixture_width = number(std::string_view(text).substr(0, x));
    c.fixture_height = number(std::string_view(text).substr(x + 1));
}

inline RunConfig resolve(Subcommand s, const RawOptions& o)
{
    RunConfig c = defaults(s);
    if (o.alpha) c.alpha = *o.alpha;
    if (o.beta) c.beta = *o.beta;
    if (o.p) c.p = *o.p;
    if (o.scheme) {
        c.scheme = parse_method(*o.scheme);
        // An explicitly chosen scheme runs with a fixed step unless asked otherwise.
        if (c.scheme != defaults(s).scheme) c.adaptive = false;
    }
    if (o.adaptive) c.adaptive = true;
    if (o.fixed) c.adaptive = false;
    if (o.tau) c.tau = *o.tau;
    if (o.tau_min) c.tau_min = *o.tau_min;
    if (o.tau_max) c.tau_max = *o.tau_max;
    if (o.max_steps) c.max_steps = *o.max_steps;
    if (o.grad_tol) c.grad_tol = *o.grad_tol;
    if (o.stall_eps) c.stall_eps = *o.stall_eps;
    if (o.tol) c.tol = *o.tol;
    if (o.quad_order) c.quad_order = *o.quad_order;
    c.lagged_fixed_point = o.lagged_fixed_point;
    c.input = o.input;
    if (o.fixture) parse_fixture(*o.fixture, c);
    c.sigma = o.sigma ? *o.sigma : (o.input.empty() ? c.sigma : 0.0);
    if (o.seed) c.seed = *o.seed;
    if (o.init) c.init = *o.init;
    if (o.scaling) c.scaling = *o.scaling == "byte" ? Scaling::Byte : Scaling::Unit;
    c.mask = o.mask;
    c.kernel = o.kernel;
    c.blur_input = o.blur_input;
    c.output = o.output;
    c.trace = o.trace;
    if (o.maxval) c.maxval = *o.maxval;
    c.timing = o.timing;
    return c;
}

// Full command line entry point.
inline int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Discrete gradient flows for variational image restoration"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value configuration file; command-line flags take precedence");
    app.set_help_all_flag("--help-all", "help for every subcommand");

    RawOptions raw;
    std::vector<std::pair<CLI::App*, Subcommand>> runs;
    const std::pair<const char*, Subcommand> run_names[] = {
        {"denoise", Subcommand::Denoise},
        {"deblur", Subcommand::Deblur},
        {"inpaint", Subcommand::Inpaint},
        {"denoise-color", Subcommand::DenoiseColor},
        {"tvp", Subcommand::Tvp},
    };
    const char* descriptions[] = {
        "TV denoising (alpha 0.05, beta 0.001, Gonzalez tau 2.5)",
        "TV deblurring (alpha 0.05, beta 0.001, Gonzalez tau 2.5; needs --kernel)",
        "TV inpainting (alpha 1e-4, beta 0.01, adaptive Itoh-Abe; needs --mask)",
        "multichannel TV denoising (alpha 100, beta 1, byte scaling, Gonzalez tau 0.2)",
        "non-convex TV^p denoising (p 0.8, alpha 0.05, beta 0.001, adaptive Itoh-Abe)",
    };
    for (std::size_t k = 0; k < std::size(run_names); ++k) {
        CLI::App* sub = app.add_subcommand(run_names[k].first, descriptions[k]);
        add_common_options(sub, raw, true);
        runs.emplace_back(sub, run_names[k].second);
    }

    CLI::App* cmp = app.add_subcommand("compare", "run several schemes on one problem with a shared step grid");
    add_common_options(cmp, raw, false);
    cmp->add_option("--model", raw.model, "denoise, deblur, inpaint, denoise-color or tvp")
        ->required()
        ->check(CLI::IsMember({"denoise", "deblur", "inpaint", "denoise-color", "tvp"}));
    cmp->add_option("--schemes", raw.schemes, "comma-separated name[:tau[:adaptive]] list")
        ->required()
        ->delimiter(',');
    cmp->add_option("--out-dir", raw.out_dir, "directory for traces and summary.csv")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_error;
    }

    try {
        for (const auto& [sub, kind] : runs)
            if (sub->parsed()) return run(resolve(kind, raw), out, err);

        CompareConfig cc;
        const Subcommand model = parse_subcommand(raw.model);
        cc.base = resolve(model, raw);
        cc.base.max_steps = raw.max_steps.value_or(100);
        for (const auto& s : raw.schemes) cc.schemes.push_back(parse_scheme_spec(s));
        cc.out_dir = raw.out_dir;
        return compare(cc, out, err);
    } catch (const std::exception& e) {
        report(err, StageError("config", e.what()));
        return exit_error;
    }
}

} // namespace dgflow::cli
