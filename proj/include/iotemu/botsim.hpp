#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iotemu/propagation.hpp"

namespace iotemu::botsim {

class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Synthetic address space: closed devices, open-but-resistant devices, and
// vulnerable devices whose telnet credential is one dictionary entry.
struct PopulationConfig {
    uint64_t total_addresses = 65536;
    double open_telnet_fraction = 0.0965;
    double vulnerable_fraction_of_open = 0.2008;
    uint32_t dictionary_size = 62;
    uint64_t seed = 1;
    // Half-open [lo, hi) address ranges that receive no probes.
    std::vector<std::pair<uint64_t, uint64_t>> whitelist;

    void validate() const;
    bool whitelisted(uint64_t addr) const;
    static PopulationConfig reference_population(uint64_t seed);  // 65536/6325/1270
};

enum class Category : uint8_t { Closed, OpenResistant, Vulnerable };
enum class InfectionStatus : uint8_t { Clean, Infected };

struct DeviceState {
    Category category = Category::Closed;
    InfectionStatus status = InfectionStatus::Clean;
    uint32_t credential_index = 0;  // meaningful for Vulnerable only
};

struct Population {
    std::vector<DeviceState> devices;
    uint64_t open_count = 0;
    uint64_t vulnerable_count = 0;
};

Population generate_population(const PopulationConfig& cfg);

// Per-bot scanning constants and network delays.
struct BotConstants {
    uint32_t probe_batch_size = 160;
    uint32_t attempt_limit = 10;
    uint32_t table_capacity = 128;
    int64_t batch_interval_ms = 1000;
    int64_t hop_delay_ms = 10;         // one-way
    int64_t login_check_ms = 50;       // command round after each guess
    int64_t connect_timeout_ms = 5000;
    int64_t silent_timeout_ms = 30000;
    int64_t install_latency_ms = 1000;  // report -> loader -> running malware
};

struct CongestionModel {
    enum class Kind { None, RateScaling } kind = Kind::None;
    double alpha = 0;
    double beta = 0;

    static CongestionModel none() { return {}; }
    static CongestionModel rate_scaling(double alpha, double beta) {
        return {Kind::RateScaling, alpha, beta};
    }
};

struct StopCondition {
    int64_t max_time_ms = 600'000;
    double fraction = 0;  // 0: run to max_time; else stop at fraction of vulnerable
};

struct SimConfig {
    PopulationConfig population;
    BotConstants bot;
    CongestionModel congestion;
    StopCondition stop;
    uint32_t initial_bots = 1;
    int64_t sample_interval_ms = 100;
};

struct ProbeCounters {
    uint64_t sent = 0;
    uint64_t suppressed_whitelisted = 0;
    uint64_t to_closed = 0;
    uint64_t to_open_resistant = 0;
    uint64_t to_vulnerable = 0;
    uint64_t table_evictions = 0;
    uint64_t login_successes = 0;
    uint64_t inert_command_events = 0;  // attack-phase placeholders, never executed
};

struct SimResult {
    model::InfectionCurve curve;  // sampled at sample_interval_ms
    uint64_t final_infected = 0;
    bool reached_stop_fraction = false;
    int64_t end_time_ms = 0;
    ProbeCounters counters;
    // Vulnerable-target login episodes, for empirical q estimation.
    uint64_t vulnerable_episodes = 0;
    uint64_t vulnerable_episode_successes = 0;
};

SimResult run_simulation(const SimConfig& cfg);

// Fraction of vulnerable-target credential-guess episodes that succeed, over
// standalone Monte Carlo episodes using the simulator's guess primitive.
double empirical_q(uint64_t episodes, uint32_t dictionary_size, uint32_t attempt_limit,
                   uint64_t seed);

struct EnsembleResult {
    std::vector<double> t_seconds;
    std::vector<double> mean_infected;
    std::vector<double> p5;
    std::vector<double> p95;
    std::vector<std::optional<double>> per_seed_time_to_fraction;
    std::optional<double> mean_time_to_fraction;

    model::InfectionCurve mean_curve() const;
};

// Runs the same configuration across `seeds` seeds (population seed offset by
// the seed index) and merges by seed order. `threads` 0 picks hardware
// concurrency.
EnsembleResult run_ensemble(const SimConfig& base, uint32_t seeds,
                            double time_to_fraction, unsigned threads = 0);

void write_ensemble_csv(const std::string& path, const EnsembleResult& ens);

}  // namespace iotemu::botsim
