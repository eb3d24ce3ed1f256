#include "iotemu/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace iotemu::model {

void ModelParams::validate() const {
    if (N < 0 || Omega < 0 || mu < 0 || alpha < 0 || I0 < 0)
        throw ModelError("model parameters must be nonnegative");
    if (q < 0 || q > 1) throw ModelError("q must lie in [0,1]");
    if (beta < 0 || beta > 1) throw ModelError("beta must lie in [0,1]");
    if (I0 > N || N > Omega) throw ModelError("require I0 <= N <= Omega");
    if (Omega <= 0) throw ModelError("Omega must be positive");
}

void InfectionCurve::validate(double n_scale) const {
    double tol = 1e-9 * n_scale;
    for (size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].t <= samples[i - 1].t)
            throw ModelError("curve times not strictly increasing");
        if (samples[i].infected < samples[i - 1].infected - tol)
            throw ModelError("curve not nondecreasing");
    }
}

double compute_q(int dictionary_size, int attempt_limit) {
    if (dictionary_size < 1) throw ModelError("dictionary size must be >= 1");
    if (attempt_limit < 0) throw ModelError("attempt limit must be >= 0");
    double miss = static_cast<double>(dictionary_size - 1) / dictionary_size;
    return 1.0 - std::pow(miss, attempt_limit);
}

double rhs_basic(double infected, const ModelParams& p) {
    return (p.mu / p.Omega) * (p.N - infected) * infected * p.q;
}

double rhs_congested(double infected, const ModelParams& p) {
    double load = p.N > 0 ? p.beta * infected / p.N : 0.0;
    if (load > 1.0 + 1e-12) throw ModelError("beta*I/N exceeds 1");
    load = std::min(load, 1.0);
    return (p.mu / p.Omega) * (p.N - infected) * std::pow(1.0 - load, p.alpha) *
           infected * p.q;
}

InfectionCurve integrate(const Rhs& rhs, const ModelParams& p,
                         const IntegrateOptions& opts) {
    p.validate();
    if (opts.step <= 0) throw ModelError("step must be positive");
    if (opts.t_end < 0) throw ModelError("t_end must be nonnegative");
    InfectionCurve curve;
    double I = p.I0;
    double t = 0;
    double next_sample = 0;
    double interval = opts.sample_interval > 0 ? opts.sample_interval : opts.step;
    curve.samples.push_back({0.0, I});
    next_sample += interval;
    while (t < opts.t_end - 1e-12) {
        double h = std::min(opts.step, opts.t_end - t);
        double k1 = rhs(I, p);
        double k2 = rhs(I + 0.5 * h * k1, p);
        double k3 = rhs(I + 0.5 * h * k2, p);
        double k4 = rhs(I + h * k3, p);
        I += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        t += h;
        if (!std::isfinite(I))
            throw ModelError("integration diverged at t=" + std::to_string(t));
        // The dynamics keep I in [I0, N]; clamp roundoff excursions.
        I = std::clamp(I, 0.0, p.N);
        if (t + 1e-9 >= next_sample || t >= opts.t_end - 1e-12) {
            curve.samples.push_back({t, I});
            while (next_sample <= t + 1e-9) next_sample += interval;
        }
    }
    return curve;
}

std::optional<double> time_to_count(const InfectionCurve& curve, double target) {
    if (curve.empty()) return std::nullopt;
    if (curve.samples.front().infected >= target) return curve.samples.front().t;
    for (size_t i = 1; i < curve.samples.size(); ++i) {
        const auto& a = curve.samples[i - 1];
        const auto& b = curve.samples[i];
        if (b.infected >= target) {
            if (b.infected == a.infected) return b.t;
            double f = (target - a.infected) / (b.infected - a.infected);
            return a.t + f * (b.t - a.t);
        }
    }
    return std::nullopt;
}

namespace {

struct Bounds {
    double lo, hi;
};

Bounds bounds_for(FreeParam p, const FitOptions& o) {
    switch (p) {
        case FreeParam::Mu: return {o.mu_lo, o.mu_hi};
        case FreeParam::Beta: return {o.beta_lo, o.beta_hi};
        case FreeParam::Alpha: return {o.alpha_lo, o.alpha_hi};
        case FreeParam::Q: return {o.q_lo, o.q_hi};
    }
    throw ModelError("unknown free parameter");
}

double& param_ref(FreeParam p, ModelParams& m) {
    switch (p) {
        case FreeParam::Mu: return m.mu;
        case FreeParam::Beta: return m.beta;
        case FreeParam::Alpha: return m.alpha;
        case FreeParam::Q: return m.q;
    }
    throw ModelError("unknown free parameter");
}

double sse_against(const InfectionCurve& observed, const ModelParams& p, double step) {
    double t_end = observed.samples.back().t;
    InfectionCurve curve;
    try {
        curve = integrate(rhs_congested, p, {t_end, step, 0});
    } catch (const ModelError&) {
        return std::numeric_limits<double>::infinity();
    }
    // Interpolate the model at the observed sample times.
    double sse = 0;
    size_t j = 1;
    for (const auto& obs : observed.samples) {
        while (j + 1 < curve.samples.size() && curve.samples[j].t < obs.t) ++j;
        const auto& a = curve.samples[j - 1];
        const auto& b = curve.samples[j];
        double model_i = b.t == a.t ? b.infected
                                    : a.infected + (obs.t - a.t) / (b.t - a.t) *
                                                       (b.infected - a.infected);
        double d = model_i - obs.infected;
        sse += d * d;
    }
    return sse;
}

}  // namespace

FitResult fit_params(const InfectionCurve& observed, const ModelParams& known,
                     const FitOptions& opts) {
    if (observed.empty()) throw ModelError("observed curve is empty");
    if (opts.free.empty()) throw ModelError("no free parameters");
    double lo = observed.samples.front().infected, hi = lo;
    for (const auto& s : observed.samples) {
        lo = std::min(lo, s.infected);
        hi = std::max(hi, s.infected);
    }
    if (hi - lo < 1e-12) throw ModelError("degenerate observed curve");

    double step = opts.integrate_step;
    if (step <= 0) {
        double span = observed.samples.back().t - observed.samples.front().t;
        step = std::max(span / 4000.0, 1e-6);
    }

    ModelParams best = known;
    // Start each free parameter at its grid minimum; the grid pass overwrites.
    double best_sse = std::numeric_limits<double>::infinity();

    // Coordinate-wise grid search: repeated passes over each free parameter.
    std::vector<Bounds> bounds;
    for (auto f : opts.free) bounds.push_back(bounds_for(f, opts));
    for (size_t i = 0; i < opts.free.size(); ++i)
        param_ref(opts.free[i], best) = 0.5 * (bounds[i].lo + bounds[i].hi);
    best_sse = sse_against(observed, best, step);

    int rounds = 1 + opts.refine_rounds;
    std::vector<Bounds> window = bounds;
    for (int round = 0; round < rounds; ++round) {
        for (size_t i = 0; i < opts.free.size(); ++i) {
            double w_lo = window[i].lo, w_hi = window[i].hi;
            double best_v = param_ref(opts.free[i], best);
            for (int g = 0; g < opts.grid_points; ++g) {
                double v = w_lo + (w_hi - w_lo) * g / (opts.grid_points - 1);
                ModelParams trial = best;
                param_ref(opts.free[i], trial) = v;
                double sse = sse_against(observed, trial, step);
                if (sse < best_sse) {
                    best_sse = sse;
                    best_v = v;
                }
            }
            param_ref(opts.free[i], best) = best_v;
            // Shrink the window around the winner for the next round.
            double width = (w_hi - w_lo) * 2.0 / (opts.grid_points - 1);
            window[i].lo = std::max(bounds[i].lo, best_v - width);
            window[i].hi = std::min(bounds[i].hi, best_v + width);
        }
    }
    return {best, best_sse};
}

void write_curve_csv(const std::string& path, const InfectionCurve& curve) {
    std::ofstream out(path);
    if (!out) throw ModelError("cannot open for writing: " + path);
    out << "t_seconds,infected\n";
    char buf[64];
    for (const auto& s : curve.samples) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f\n", s.t, s.infected);
        out << buf;
    }
}

InfectionCurve read_curve_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open: " + path);
    InfectionCurve curve;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first) {
            first = false;
            if (line.find("t_seconds") != std::string::npos) continue;
        }
        std::istringstream ss(line);
        std::string t_str, i_str;
        if (!std::getline(ss, t_str, ',') || !std::getline(ss, i_str, ','))
            throw ModelError("bad CSV line: " + line);
        curve.samples.push_back({std::stod(t_str), std::stod(i_str)});
    }
    return curve;
}

}  // namespace iotemu::model
