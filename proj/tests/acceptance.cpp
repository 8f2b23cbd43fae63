// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: dgflow_acceptance <path to the dgflow executable>

#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace dgflow;
using namespace dgflow::testing;

namespace {

struct Outcome
{
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what)
    {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void note(const std::string& what)
    {
        if (!detail.empty()) detail += "; ";
        detail += what;
    }
};

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

FlowOptions quiet()
{
    FlowOptions o;
    o.record_time = false;
    return o;
}

bool monotone(const FlowTrace& t, double rel)
{
    for (std::size_t k = 1; k < t.rows.size(); ++k)
        if (t.rows[k].energy > t.rows[k - 1].energy + rel * (1.0 + std::abs(t.rows[k - 1].energy))) return false;
    return true;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

// Every run that reports convergence, for the stationarity check.
struct ConvergedRun
{
    std::string name;
    double final_grad;
    double bound;
};
std::vector<ConvergedRun> converged_runs;

template <class E>
FlowResult flow(const std::string& name, const E& V, Method m, StepController ctl, StopCriteria stop, ImageGrid x0,
                FlowOptions opt = quiet())
{
    FlowResult r = run_flow(V, m, ctl, stop, std::move(x0), opt);
    if (r.reason == StopReason::Converged)
        converged_runs.push_back({name, norm(V.gradient(r.final_state)),
                                  stop.grad_tol * (1.0 + r.trace.rows.front().grad_norm)});
    return r;
}

ImageGrid denoise_fixture() { return noisy_shapes(32, 32, 0.1, 1); }

// ---------------------------------------------------------------------------

Outcome secant_identity()
{
    Outcome o;
    std::mt19937_64 rng(2024);
    const DGScheme schemes[] = {DGScheme::gonzalez(), DGScheme::mean_value(4), DGScheme::itoh_abe()};
    std::uniform_real_distribution<double> spread(0.01, 2.0);
    double worst = 0.0;
    int count = 0;
    for (int k = 0; k < 200; ++k) {
        const ModelKind kind = all_kinds()[std::size_t(k) % 5];
        const DGScheme& s = schemes[std::size_t(k / 5) % 3];
        const std::size_t ch = kind == ModelKind::MultichannelTV2 ? 3 : 1;
        std::size_t w, h;
        do {
            w = 3 + rng() % 8;
            h = 3 + rng() % 8;
        } while (w * h * ch > 100);
        const auto V = random_model(rng, kind, w, h, 0.01 + 0.2 * spread(rng), 0.001 + 0.05 * spread(rng));
        const ImageGrid x = random_grid(rng, V.shape(), -0.5, 1.5);
        ImageGrid x2 = x;
        axpy(spread(rng), random_grid(rng, V.shape(), -1, 1).values(), x2.values());
        const ImageGrid g = discrete_gradient(V, s, x, x2);
        const double vx = V.value(x), vx2 = V.value(x2);
        const double defect = std::abs(inner(g, x2 - x) - (vx2 - vx)) / (1.0 + std::abs(vx) + std::abs(vx2));
        worst = std::max(worst, defect);
        ++count;
    }
    o.require(worst <= 1e-10, "scaled defect " + num(worst) + " > 1e-10");
    o.note(std::to_string(count) + " instances, max scaled defect " + num(worst));
    return o;
}

Outcome gradient_check()
{
    Outcome o;
    std::mt19937_64 rng(77);
    double worst = 0.0;
    for (ModelKind kind : all_kinds())
        for (int trial = 0; trial < 4; ++trial) {
            const double beta = trial % 2 ? 0.001 : 0.05;
            const auto V = random_model(rng, kind, 8, 8, 0.05 + 0.2 * trial, beta);
            const ImageGrid u = random_grid(rng, V.shape());
            const ImageGrid g = V.gradient(u);
            for (std::size_t k = 0; k < u.size(); ++k)
                worst = std::max(worst, std::abs(fd_partial(V, u, k) - g[k]) / (1.0 + std::abs(g[k])));
        }
    o.require(worst <= 1e-5, "max relative error " + num(worst));
    o.note("5 models x 4 instances on 8x8, max relative error " + num(worst));
    return o;
}

Outcome unconditional_dissipation()
{
    Outcome o;
    const ImageGrid u0 = denoise_fixture();
    const auto V = FunctionalModel::denoise(u0, 0.05, 0.001);
    for (double tau : {0.1, 1.0, 2.5, 10.0, 100.0}) {
        const auto r = flow("gonzalez tau=" + num(tau), V, Method::Gonzalez, StepController::fixed(tau),
                            StopCriteria{50, 0.0, 0.0}, u0);
        o.require(r.reason != StopReason::Failed, "gonzalez tau=" + num(tau) + " failed: " + r.error);
        o.require(monotone(r.trace, 1e-8), "gonzalez tau=" + num(tau) + " energy increased");
    }
    const auto euler = flow("euler tau=0.5", V, Method::Euler, StepController::fixed(0.5), StopCriteria{50, 0.0, 0.0}, u0);
    const std::size_t ups = energy_increases(euler.trace);
    o.require(ups >= 1, "euler tau=0.5 never increased the energy");
    o.note("gonzalez monotone for tau in {0.1,1,2.5,10,100}; euler tau=0.5: " + std::to_string(ups) +
           " increases in 50 steps");
    return o;
}

struct UniqueRuns
{
    std::vector<FlowResult> runs;
};

UniqueRuns& denoise_converged()
{
    static UniqueRuns cache = [] {
        UniqueRuns u;
        const ImageGrid u0 = denoise_fixture();
        const auto V = FunctionalModel::denoise(u0, 0.05, 0.001);
        for (double tau : {0.1, 1.0, 2.5})
            u.runs.push_back(flow("gonzalez converge tau=" + num(tau), V, Method::Gonzalez, StepController::fixed(tau),
                                  StopCriteria{2000, 1e-6, 0.0}, u0));
        return u;
    }();
    return cache;
}

Outcome uniqueness()
{
    Outcome o;
    const auto& runs = denoise_converged().runs;
    double de = 0.0, dx = 0.0;
    for (const auto& r : runs) {
        o.require(r.reason == StopReason::Converged, "a run did not converge (" + std::string(to_string(r.reason)) + ")");
        de = std::max(de, rel_diff(r.trace.rows.back().energy, runs[0].trace.rows.back().energy));
        dx = std::max(dx, rms_difference(r.final_state, runs[0].final_state));
    }
    o.require(de <= 1e-6, "energy spread " + num(de));
    o.require(dx <= 1e-4, "iterate RMS spread " + num(dx));
    o.note("steps " + std::to_string(runs[0].trace.rows.size() - 1) + "/" + std::to_string(runs[1].trace.rows.size() - 1) +
           "/" + std::to_string(runs[2].trace.rows.size() - 1) + ", energy spread " + num(de) + ", RMS spread " +
           num(dx));
    return o;
}

Outcome scheme_equivalence()
{
    Outcome o;
    const ImageGrid u0 = denoise_fixture();
    const auto V = FunctionalModel::denoise(u0, 0.05, 0.001);
    const auto ia =
        flow("itoh-abe adaptive denoise", V, Method::ItohAbe, StepController::adaptive(1.0), StopCriteria{2000, 1e-6, 0.0}, u0);
    const auto& gz = denoise_converged().runs[2];
    o.require(ia.reason == StopReason::Converged, "itoh-abe did not converge");
    const double d = rel_diff(ia.trace.rows.back().energy, gz.trace.rows.back().energy);
    o.require(d <= 1e-4, "relative energy gap " + num(d));
    o.note("itoh-abe " + std::to_string(ia.trace.rows.size() - 1) + " steps, gap to gonzalez " + num(d));
    return o;
}

Outcome quadratic_oracle()
{
    Outcome o;
    std::mt19937_64 rng(99);
    double worst_mid = 0.0, worst_ia = 0.0;
    StepOptions tight;
    tight.tol = 1e-12;
    tight.newton.forcing = 1e-6;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng() % 20;
        const QuadraticEnergy V(n, random_spd(rng, n));
        const ImageGrid x = random_grid(rng, V.shape(), -1, 1);
        const double tau = std::pow(10.0, double(trial % 5) - 2.0);
        std::vector<double> lhs(n * n), rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            rhs[i] = x[i];
            for (std::size_t j = 0; j < n; ++j) {
                lhs[i * n + j] = (i == j) + 0.5 * tau * V.entry(i, j);
                rhs[i] -= 0.5 * tau * V.entry(i, j) * x[j];
            }
        }
        const auto exact = dense_solve(lhs, rhs);
        const ImageGrid x2 = dg_step_implicit(V, DGScheme::gonzalez(), x, tau, tight).state;
        for (std::size_t k = 0; k < n; ++k) worst_mid = std::max(worst_mid, std::abs(x2[k] - exact[k]));

        std::vector<double> a(n);
        std::uniform_real_distribution<double> d(0.05, 5.0);
        for (auto& v : a) v = d(rng);
        const QuadraticEnergy D = QuadraticEnergy::diagonal(a);
        StepOptions ia_opt;
        ia_opt.tol = 1e-14;
        const ImageGrid y = itoh_abe_step(D, x, tau, ia_opt).state;
        for (std::size_t k = 0; k < n; ++k)
            worst_ia = std::max(worst_ia, std::abs(y[k] - x[k] * (1.0 - tau * a[k] / 2.0) / (1.0 + tau * a[k] / 2.0)));
    }
    o.require(worst_mid <= 1e-8, "gonzalez vs implicit midpoint " + num(worst_mid));
    o.require(worst_ia <= 1e-10, "itoh-abe vs closed form " + num(worst_ia));
    o.note("max errors: midpoint " + num(worst_mid) + ", itoh-abe " + num(worst_ia));
    return o;
}

Outcome deblur_operator()
{
    Outcome o;
    ImageGrid impulse(Shape{21, 21, 1});
    impulse(10, 10) = 1.0;
    const ImageGrid resp = convolve_reflect(impulse, Kernel::box(7));
    double e_imp = 0.0;
    for (std::size_t j = 0; j < 21; ++j)
        for (std::size_t i = 0; i < 21; ++i) {
            const bool in = i >= 7 && i <= 13 && j >= 7 && j <= 13;
            e_imp = std::max(e_imp, std::abs(resp(i, j) - (in ? 1.0 / 49.0 : 0.0)));
        }
    o.require(e_imp <= 1e-12, "impulse response error " + num(e_imp));

    std::mt19937_64 rng(5);
    double e_adj = 0.0;
    for (int t = 0; t < 20; ++t) {
        const ImageGrid u = random_grid(rng, Shape{8, 8, 1}), v = random_grid(rng, Shape{8, 8, 1});
        const Kernel k = Kernel::box(t % 2 ? 7 : 3);
        e_adj = std::max(e_adj, std::abs(inner(convolve_reflect(u, k), v) - inner(u, convolve_reflect(v, k))));
    }
    o.require(e_adj <= 1e-10, "self-adjointness error " + num(e_adj));

    double e_dir = 0.0;
    for (std::size_t w : {4, 5, 8})
        for (std::size_t h : {4, 7, 8})
            for (std::size_t ks : {3, 7}) {
                const ImageGrid u = random_grid(rng, Shape{w, h, 1});
                const ImageGrid a = convolve_reflect(u, Kernel::box(ks)), b = direct_reflect_convolution(u, Kernel::box(ks));
                for (std::size_t q = 0; q < a.size(); ++q) e_dir = std::max(e_dir, std::abs(a[q] - b[q]));
            }
    o.require(e_dir <= 1e-10, "direct summation mismatch " + num(e_dir));
    o.note("impulse " + num(e_imp) + ", adjoint " + num(e_adj) + ", direct " + num(e_dir));
    return o;
}

ImageGrid inpaint_fixture() { return noisy_shapes(32, 32, 0.1, 1); }
FunctionalModel inpaint_model() { return FunctionalModel::inpaint(inpaint_fixture(), stroke_mask(32, 32), 0.05, 0.01); }

const FlowResult& inpaint_itoh_abe()
{
    static const FlowResult r = [] {
        const auto V = inpaint_model();
        return flow("itoh-abe adaptive inpaint", V, Method::ItohAbe, StepController::adaptive(1.0),
                    StopCriteria{2000, 1e-6, 0.0}, inpaint_fixture());
    }();
    return r;
}

Outcome adaptive_controller()
{
    Outcome o;
    // Unit rule on V = x^2/2 from x = 1: small tau favours 2 tau, large tau favours tau.
    const QuadraticEnergy Q = QuadraticEnergy::diagonal({1.0});
    const ImageGrid x(Q.shape(), {1.0});
    const auto small = adaptive_controller_step(Q, Method::Gonzalez, x, StepController::adaptive(0.1));
    o.require(small.next.tau == 0.2, "2tau win did not double");
    const auto large = adaptive_controller_step(Q, Method::Gonzalez, x, StepController::adaptive(10.0));
    o.require(large.next.tau == 5.0, "tau win did not halve");
    const auto capped = adaptive_controller_step(Q, Method::Gonzalez, x, StepController::adaptive(0.1, 1e-3, 0.1));
    o.require(capped.next.tau == 0.1, "tau_max not enforced");
    const auto floored =
        adaptive_controller_step(Q, Method::Gonzalez, ImageGrid(Q.shape()), StepController::adaptive(1e-3, 1e-3, 1.0));
    o.require(floored.next.tau == 1e-3, "tau_min not enforced");

    const auto& r = inpaint_itoh_abe();
    o.require(r.reason == StopReason::Converged, "inpainting run did not converge");
    std::size_t ups = 0, downs = 0;
    const auto taus = r.trace.taus();
    for (std::size_t k = 2; k < taus.size(); ++k) {
        ups += taus[k] > taus[k - 1];
        downs += taus[k] < taus[k - 1];
    }
    o.require(ups > 0 && downs > 0, "tau sequence lacks doublings or halvings");
    o.note("inpainting tau sequence: " + std::to_string(ups) + " doublings, " + std::to_string(downs) + " halvings");
    return o;
}

Outcome nonconvex_tvp()
{
    Outcome o;
    const ImageGrid u0 = denoise_fixture();
    for (auto [p, alpha] : {std::pair{0.8, 0.05}, std::pair{0.2, 0.5}}) {
        const auto V = FunctionalModel::tvp(u0, alpha, 0.001, p);
        const std::string tag = "p=" + num(p);
        const auto noisy = flow("tvp noisy " + tag, V, Method::ItohAbe, StepController::adaptive(1.0),
                                StopCriteria{1000, 1e-6, 0.0}, u0);
        const auto random = flow("tvp random " + tag, V, Method::ItohAbe, StepController::adaptive(1.0),
                                 StopCriteria{1000, 1e-6, 0.0}, uniform_field(u0.shape(), 0.0, 1.0, 7));
        o.require(monotone(noisy.trace, 1e-12), tag + " noisy init not monotone");
        o.require(monotone(random.trace, 1e-12), tag + " random init not monotone");
        o.require(noisy.reason != StopReason::Failed && random.reason != StopReason::Failed, tag + " run failed");
        const double d = rel_diff(noisy.trace.rows.back().energy, random.trace.rows.back().energy);
        o.require(d <= 0.05, tag + " final energies differ by " + num(d));
        o.note(tag + ": E=" + num(noisy.trace.rows.back().energy) + " vs " + num(random.trace.rows.back().energy));
    }
    return o;
}

Outcome lagged_diffusivity()
{
    Outcome o;
    const auto V = inpaint_model();
    const auto lag = flow("lagged tau=0.1 inpaint", V, Method::Lagged, StepController::fixed(0.1),
                          StopCriteria{5000, 1e-6, 0.0}, inpaint_fixture());
    o.require(lag.trace.rows.size() > 50, "lagged run shorter than 50 steps");
    FlowTrace first50;
    first50.rows.assign(lag.trace.rows.begin(), lag.trace.rows.begin() + std::min<std::size_t>(51, lag.trace.rows.size()));
    o.require(monotone(first50, 1e-12), "energy increased within the first 50 steps");
    o.require(monotone(lag.trace, 1e-12), "energy increased later in the run");
    o.require(lag.reason == StopReason::Converged, "lagged run did not converge");
    const double d = rel_diff(lag.trace.rows.back().energy, inpaint_itoh_abe().trace.rows.back().energy);
    o.require(d <= 1e-3, "gap to itoh-abe " + num(d));
    o.note("lagged " + std::to_string(lag.trace.rows.size() - 1) + " steps, gap to itoh-abe " + num(d));
    return o;
}

Outcome stationarity()
{
    Outcome o;
    for (const auto& r : converged_runs) o.require(r.final_grad <= r.bound, r.name + ": " + num(r.final_grad));
    o.note(std::to_string(converged_runs.size()) + " converged runs checked");
    o.require(!converged_runs.empty(), "no converged runs");
    return o;
}

Outcome determinism(const std::string& cli)
{
    Outcome o;
    if (cli.empty()) {
        o.require(false, "path to the dgflow executable not given");
        return o;
    }
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "dgflow_acceptance_determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::vector<std::string> configs = {
        "denoise --sigma 0.1 --seed 11",
        "inpaint --mask strokes --alpha 0.01 --seed 5",
        "tvp --p 0.8 --init random --seed 7",
        "deblur --kernel box7 --blur-input --fixture 16x16 --sigma 0.01 --max-steps 20",
        "denoise-color --fixture 12x12 --seed 2",
    };
    int idx = 0;
    for (const auto& cfg : configs) {
        std::string bytes[2][2];
        for (int rep = 0; rep < 2; ++rep) {
            const std::string img = (dir / ("img" + std::to_string(idx) + "_" + std::to_string(rep))).string();
            const std::string tr = (dir / ("tr" + std::to_string(idx) + "_" + std::to_string(rep) + ".csv")).string();
            const std::string cmd = cli + " " + cfg + " --output " + img + " --trace " + tr + " >/dev/null 2>&1";
            const int rc = std::system(cmd.c_str());
            o.require(rc != -1 && WIFEXITED(rc) && WEXITSTATUS(rc) != 1, "run failed: " + cfg);
            bytes[rep][0] = fs::exists(img) ? detail::read_file(img) : "";
            bytes[rep][1] = fs::exists(tr) ? detail::read_file(tr) : "";
        }
        o.require(!bytes[0][0].empty() && bytes[0][0] == bytes[1][0], "image differs: " + cfg);
        o.require(!bytes[0][1].empty() && bytes[0][1] == bytes[1][1], "trace differs: " + cfg);
        ++idx;
    }
    fs::remove_all(dir);
    o.note(std::to_string(configs.size()) + " configurations run twice, outputs byte-compared");
    return o;
}

} // namespace

int main(int argc, char** argv)
{
    const std::string cli = argc > 1 ? argv[1] : "";
    struct Criterion
    {
        int id;
        const char* name;
        double budget_s; // 0: no runtime bound
        std::function<Outcome()> check;
    };
    // Stationarity (5) is evaluated last since it audits the runs of the others.
    const std::vector<Criterion> criteria = {
        {1, "secant identity", 10, secant_identity},
        {2, "gradient vs finite differences", 30, gradient_check},
        {3, "unconditional dissipation", 120, unconditional_dissipation},
        {4, "unique minimiser from any step size", 120, uniqueness},
        {6, "itoh-abe and gonzalez agree at equilibrium", 0, scheme_equivalence},
        {7, "quadratic closed forms", 0, quadratic_oracle},
        {8, "reflective blur operator", 0, deblur_operator},
        {9, "adaptive step controller", 0, adaptive_controller},
        {10, "non-convex TV^p from two initialisations", 180, nonconvex_tvp},
        {11, "lagged diffusivity vs itoh-abe", 0, lagged_diffusivity},
        {12, "bitwise reproducible CLI runs", 0, [&] { return determinism(cli); }},
        {5, "stationarity of converged runs", 0, stationarity},
    };

    std::vector<std::pair<int, std::string>> lines;
    int failures = 0;
    for (const auto& c : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.check();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_s > 0) out.require(secs < c.budget_s, "runtime " + num(secs) + " s over " + num(c.budget_s) + " s");
        failures += !out.pass;
        std::ostringstream line;
        line << (out.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << " (" << num(secs)
             << " s) " << out.detail;
        lines.emplace_back(c.id, line.str());
        std::printf("%s\n", line.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
