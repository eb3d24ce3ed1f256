#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace iotemu::model {

class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

// Parameters of the infection-rate ODEs.
struct ModelParams {
    double N = 0;       // vulnerable device count
    double Omega = 0;   // address-space size
    double mu = 0;      // scan rate, probes per second per bot
    double q = 0;       // per-hit credential success probability
    double beta = 0;    // vulnerable-to-open ratio
    double alpha = 0;   // congestion sensitivity
    double I0 = 1;      // initially infected

    void validate() const;  // throws ModelError
};

struct CurveSample {
    double t;  // seconds
    double infected;
};

struct InfectionCurve {
    std::vector<CurveSample> samples;

    bool empty() const { return samples.empty(); }
    double final_infected() const { return samples.empty() ? 0 : samples.back().infected; }
    void validate(double n_scale) const;  // t strictly increasing, I nondecreasing
};

// Probability that up to `attempt_limit` uniform draws (with replacement) from
// a dictionary of size `dictionary_size` hit the one correct entry:
// 1 - ((D-1)/D)^k.
double compute_q(int dictionary_size, int attempt_limit);

// dI/dt without congestion: (mu/Omega) * (N - I) * I * q
double rhs_basic(double infected, const ModelParams& p);

// dI/dt with the congestion factor [1 - beta*I/N]^alpha applied.
double rhs_congested(double infected, const ModelParams& p);

using Rhs = std::function<double(double, const ModelParams&)>;

struct IntegrateOptions {
    double t_end = 0;
    double step = 1.0;
    double sample_interval = 0;  // 0: every step
};

// Classical fixed-step 4th-order integration from I(0) = I0. Throws
// ModelError on divergence (the message carries the last valid time).
InfectionCurve integrate(const Rhs& rhs, const ModelParams& p, const IntegrateOptions& opts);

// First time the curve reaches `target` infected, by linear interpolation
// between the bracketing samples. nullopt when the curve never gets there.
std::optional<double> time_to_count(const InfectionCurve& curve, double target);

enum class FreeParam { Mu, Beta, Alpha, Q };

struct FitOptions {
    std::vector<FreeParam> free;
    // Search bounds per parameter.
    double mu_lo = 1, mu_hi = 1000;
    double beta_lo = 0, beta_hi = 1;
    double alpha_lo = 0, alpha_hi = 10;
    double q_lo = 1e-4, q_hi = 1;
    int grid_points = 50;
    int refine_rounds = 3;
    double integrate_step = 0;  // 0: derived from the observed sample spacing
};

struct FitResult {
    ModelParams params;
    double residual;  // sum of squared errors
};

// Least-squares fit of the congested model to an observed curve: grid search
// over the free parameters followed by coordinate-descent refinement.
// Deterministic for fixed inputs.
FitResult fit_params(const InfectionCurve& observed, const ModelParams& known,
                     const FitOptions& opts);

// CSV io. Model curves use the header "t_seconds,infected".
void write_curve_csv(const std::string& path, const InfectionCurve& curve);
InfectionCurve read_curve_csv(const std::string& path);

}  // namespace iotemu::model
