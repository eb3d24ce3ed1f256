#include "iotemu/botsim.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <fstream>
#include <queue>
#include <random>
#include <thread>
#include <tuple>
#include <unordered_map>

namespace iotemu::botsim {

void PopulationConfig::validate() const {
    if (total_addresses == 0) throw SimError("total_addresses must be positive");
    if (open_telnet_fraction < 0 || open_telnet_fraction > 1)
        throw SimError("open_telnet_fraction out of [0,1]");
    if (vulnerable_fraction_of_open < 0 || vulnerable_fraction_of_open > 1)
        throw SimError("vulnerable_fraction_of_open out of [0,1]");
    if (dictionary_size == 0) throw SimError("dictionary_size must be positive");
    for (auto [lo, hi] : whitelist)
        if (lo >= hi || hi > total_addresses) throw SimError("bad whitelist range");
}

bool PopulationConfig::whitelisted(uint64_t addr) const {
    for (auto [lo, hi] : whitelist)
        if (addr >= lo && addr < hi) return true;
    return false;
}

PopulationConfig PopulationConfig::reference_population(uint64_t seed) {
    PopulationConfig cfg;
    cfg.total_addresses = 65536;
    cfg.open_telnet_fraction = 6325.0 / 65536.0;
    cfg.vulnerable_fraction_of_open = 1270.0 / 6325.0;
    cfg.dictionary_size = 62;
    cfg.seed = seed;
    return cfg;
}

Population generate_population(const PopulationConfig& cfg) {
    cfg.validate();
    uint64_t total = cfg.total_addresses;
    uint64_t open_count =
        static_cast<uint64_t>(std::llround(total * cfg.open_telnet_fraction));
    uint64_t vuln_count = static_cast<uint64_t>(
        std::llround(open_count * cfg.vulnerable_fraction_of_open));
    std::mt19937_64 rng(cfg.seed);

    Population pop;
    pop.devices.assign(total, DeviceState{});
    pop.open_count = open_count;
    pop.vulnerable_count = vuln_count;

    // Partial Fisher-Yates: the first open_count slots of `order` become the
    // open devices, the first vuln_count of those the vulnerable ones.
    std::vector<uint64_t> order(total);
    for (uint64_t i = 0; i < total; ++i) order[i] = i;
    for (uint64_t i = 0; i < open_count && i < total; ++i) {
        std::uniform_int_distribution<uint64_t> pick(i, total - 1);
        std::swap(order[i], order[pick(rng)]);
    }
    std::uniform_int_distribution<uint32_t> cred(0, cfg.dictionary_size - 1);
    for (uint64_t i = 0; i < open_count; ++i) {
        DeviceState& d = pop.devices[order[i]];
        if (i < vuln_count) {
            d.category = Category::Vulnerable;
            d.credential_index = cred(rng);
        } else {
            d.category = Category::OpenResistant;
        }
    }
    return pop;
}

namespace {

enum class EventKind : uint8_t {
    ProbeBatch = 0,
    SynAck,
    ConnectTimeout,
    LoginReply,
    ReportToScanListen,
    LoaderInstall,
    RegisterWithCnC,
};

struct Event {
    int64_t at_ms;
    EventKind kind;
    uint64_t subject;  // bot address
    uint64_t object;   // target address
    uint64_t flow;     // invalidates events of freed table entries
    uint64_t seq;
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        auto key = [](const Event& e) {
            return std::tuple(e.at_ms, static_cast<uint8_t>(e.kind), e.subject,
                              e.object, e.seq);
        };
        return key(a) > key(b);  // min-heap
    }
};

enum class EntryState : uint8_t { Connecting, Connected };

struct TableEntry {
    uint64_t target;
    EntryState state = EntryState::Connecting;
    uint32_t attempts = 0;
    int64_t created_ms = 0;
    uint64_t flow = 0;
};

struct Bot {
    bool active = false;
    std::vector<TableEntry> table;
    std::unordered_map<uint64_t, size_t> by_target;  // target -> table index
};

struct Engine {
    const SimConfig& cfg;
    Population pop;
    std::mt19937_64 rng;
    std::priority_queue<Event, std::vector<Event>, EventLater> queue;
    uint64_t seq = 0;
    uint64_t flow_counter = 0;
    std::unordered_map<uint64_t, Bot> bots;
    uint64_t infected = 0;
    std::vector<std::pair<int64_t, uint64_t>> change_points;  // (t_ms, infected)
    ProbeCounters counters;
    uint64_t vulnerable_episodes = 0;
    uint64_t vulnerable_episode_successes = 0;

    explicit Engine(const SimConfig& c)
        : cfg(c), pop(generate_population(c.population)), rng(c.population.seed ^ 0x9e3779b97f4a7c15ull) {}

    void push(int64_t at, EventKind kind, uint64_t subject, uint64_t object,
              uint64_t flow = 0) {
        queue.push(Event{at, kind, subject, object, flow, seq++});
    }

    int64_t rtt() const { return 2 * cfg.bot.hop_delay_ms; }
    int64_t attempt_duration() const { return rtt() + cfg.bot.login_check_ms; }

    double congestion_factor() const {
        if (cfg.congestion.kind != CongestionModel::Kind::RateScaling) return 1.0;
        double n = static_cast<double>(pop.vulnerable_count);
        if (n <= 0) return 1.0;
        double load = cfg.congestion.beta * static_cast<double>(infected) / n;
        return std::pow(std::clamp(1.0 - load, 0.0, 1.0), cfg.congestion.alpha);
    }

    void free_entry(Bot& bot, uint64_t target) {
        auto it = bot.by_target.find(target);
        if (it == bot.by_target.end()) return;
        size_t idx = it->second;
        bot.by_target.erase(it);
        size_t last = bot.table.size() - 1;
        if (idx != last) {
            bot.table[idx] = bot.table[last];
            bot.by_target[bot.table[idx].target] = idx;
        }
        bot.table.pop_back();
    }

    TableEntry* entry_for(Bot& bot, uint64_t target, uint64_t flow) {
        auto it = bot.by_target.find(target);
        if (it == bot.by_target.end()) return nullptr;
        TableEntry& e = bot.table[it->second];
        return e.flow == flow ? &e : nullptr;
    }

    void finish_episode(uint64_t target, bool success) {
        if (pop.devices[target].category == Category::Vulnerable) {
            ++vulnerable_episodes;
            if (success) ++vulnerable_episode_successes;
        }
    }

    void infect(uint64_t addr, int64_t now) {
        DeviceState& d = pop.devices[addr];
        if (d.status == InfectionStatus::Infected) return;
        d.status = InfectionStatus::Infected;
        ++infected;
        change_points.emplace_back(now, infected);
        Bot& bot = bots[addr];
        bot.active = false;
        push(now + rtt(), EventKind::RegisterWithCnC, addr, addr);
    }

    void probe_batch(const Event& ev) {
        Bot& bot = bots[ev.subject];
        if (!bot.active) return;
        push(ev.at_ms + cfg.bot.batch_interval_ms, EventKind::ProbeBatch, ev.subject,
             ev.subject);
        double factor = congestion_factor();
        std::uniform_int_distribution<uint64_t> addr_dist(0, cfg.population.total_addresses - 1);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (uint32_t i = 0; i < cfg.bot.probe_batch_size; ++i) {
            if (factor < 1.0 && unit(rng) >= factor) continue;  // congestion thinning
            uint64_t target = addr_dist(rng);
            if (cfg.population.whitelisted(target)) {
                ++counters.suppressed_whitelisted;
                continue;
            }
            ++counters.sent;
            const DeviceState& d = pop.devices[target];
            switch (d.category) {
                case Category::Closed: ++counters.to_closed; break;
                case Category::OpenResistant: ++counters.to_open_resistant; break;
                case Category::Vulnerable: ++counters.to_vulnerable; break;
            }
            if (target == ev.subject) continue;
            if (d.category == Category::Closed) continue;
            if (d.status == InfectionStatus::Infected) continue;  // port closed by malware
            if (bot.by_target.count(target)) continue;  // one flow per target at a time
            push(ev.at_ms + rtt(), EventKind::SynAck, ev.subject, target);
        }
    }

    void syn_ack(const Event& ev) {
        Bot& bot = bots[ev.subject];
        if (!bot.active) return;
        const DeviceState& d = pop.devices[ev.object];
        if (d.status == InfectionStatus::Infected) return;
        if (bot.by_target.count(ev.object)) return;
        if (bot.table.size() >= cfg.bot.table_capacity) {
            // Evict the oldest Connecting entry; drop the new flow otherwise.
            size_t victim = SIZE_MAX;
            int64_t oldest = INT64_MAX;
            for (size_t i = 0; i < bot.table.size(); ++i)
                if (bot.table[i].state == EntryState::Connecting &&
                    bot.table[i].created_ms < oldest) {
                    oldest = bot.table[i].created_ms;
                    victim = i;
                }
            if (victim == SIZE_MAX) return;
            ++counters.table_evictions;
            free_entry(bot, bot.table[victim].target);
        }
        TableEntry entry;
        entry.target = ev.object;
        entry.state = EntryState::Connecting;
        entry.created_ms = ev.at_ms;
        entry.flow = ++flow_counter;
        bot.by_target[ev.object] = bot.table.size();
        bot.table.push_back(entry);
        push(ev.at_ms + cfg.bot.connect_timeout_ms, EventKind::ConnectTimeout, ev.subject,
             ev.object, entry.flow);
        // Handshake completes one hop later; the first guess is answered a full
        // attempt round after that.
        push(ev.at_ms + cfg.bot.hop_delay_ms + attempt_duration(), EventKind::LoginReply,
             ev.subject, ev.object, entry.flow);
    }

    void connect_timeout(const Event& ev) {
        Bot& bot = bots[ev.subject];
        TableEntry* e = entry_for(bot, ev.object, ev.flow);
        if (!e || e->state != EntryState::Connecting) return;
        free_entry(bot, ev.object);
    }

    void login_reply(const Event& ev) {
        Bot& bot = bots[ev.subject];
        if (!bot.active) return;
        TableEntry* e = entry_for(bot, ev.object, ev.flow);
        if (!e) return;
        e->state = EntryState::Connected;
        DeviceState& d = pop.devices[ev.object];
        if (d.status == InfectionStatus::Infected) {
            free_entry(bot, ev.object);  // peer vanished mid-login
            return;
        }
        std::uniform_int_distribution<uint32_t> guess_dist(
            0, cfg.population.dictionary_size - 1);
        uint32_t guess = guess_dist(rng);
        ++e->attempts;
        bool success =
            d.category == Category::Vulnerable && guess == d.credential_index;
        if (success) {
            ++counters.login_successes;
            finish_episode(ev.object, true);
            free_entry(bot, ev.object);
            push(ev.at_ms + cfg.bot.hop_delay_ms, EventKind::ReportToScanListen,
                 ev.subject, ev.object);
            return;
        }
        if (e->attempts >= cfg.bot.attempt_limit) {
            finish_episode(ev.object, false);
            free_entry(bot, ev.object);
            return;
        }
        push(ev.at_ms + attempt_duration(), EventKind::LoginReply, ev.subject, ev.object,
             ev.flow);
    }

    void report(const Event& ev) {
        // ScanListen -> loader -> transfer collapsed into one latency.
        push(ev.at_ms + cfg.bot.install_latency_ms, EventKind::LoaderInstall, ev.subject,
             ev.object);
    }

    void install(const Event& ev) { infect(ev.object, ev.at_ms); }

    void register_cnc(const Event& ev) {
        Bot& bot = bots[ev.subject];
        bot.active = true;
        // Attack commands from the C&C are represented as inert events.
        ++counters.inert_command_events;
        push(ev.at_ms + 1, EventKind::ProbeBatch, ev.subject, ev.subject);
    }

    SimResult run() {
        uint64_t stop_count = 0;
        if (cfg.stop.fraction > 0)
            stop_count = static_cast<uint64_t>(
                std::ceil(cfg.stop.fraction * static_cast<double>(pop.vulnerable_count)));

        // Seed bots take over the first vulnerable addresses (deterministic per
        // population) so that I saturates at the vulnerable count.
        uint32_t seeded = 0;
        change_points.emplace_back(0, 0);
        for (uint64_t a = 0; a < pop.devices.size() && seeded < cfg.initial_bots; ++a) {
            if (pop.devices[a].category != Category::Vulnerable) continue;
            pop.devices[a].status = InfectionStatus::Infected;
            ++infected;
            Bot& bot = bots[a];
            bot.active = true;
            push(0, EventKind::ProbeBatch, a, a);
            ++seeded;
        }
        if (seeded == 0) throw SimError("population has no vulnerable device to seed");
        change_points.emplace_back(0, infected);

        int64_t now = 0;
        bool reached = stop_count > 0 && infected >= stop_count;
        while (!queue.empty() && !reached) {
            Event ev = queue.top();
            if (ev.at_ms > cfg.stop.max_time_ms) break;
            queue.pop();
            now = ev.at_ms;
            switch (ev.kind) {
                case EventKind::ProbeBatch: probe_batch(ev); break;
                case EventKind::SynAck: syn_ack(ev); break;
                case EventKind::ConnectTimeout: connect_timeout(ev); break;
                case EventKind::LoginReply: login_reply(ev); break;
                case EventKind::ReportToScanListen: report(ev); break;
                case EventKind::LoaderInstall: install(ev); break;
                case EventKind::RegisterWithCnC: register_cnc(ev); break;
            }
            if (stop_count > 0 && infected >= stop_count) reached = true;
        }
        int64_t end_ms = reached ? now : cfg.stop.max_time_ms;

        SimResult result;
        result.final_infected = infected;
        result.reached_stop_fraction = stop_count > 0 && infected >= stop_count;
        result.end_time_ms = end_ms;
        result.counters = counters;
        result.vulnerable_episodes = vulnerable_episodes;
        result.vulnerable_episode_successes = vulnerable_episode_successes;

        // Step-function resampling of the change points.
        size_t cp = 0;
        uint64_t level = 0;
        for (int64_t t = 0; t <= end_ms; t += cfg.sample_interval_ms) {
            while (cp < change_points.size() && change_points[cp].first <= t)
                level = change_points[cp++].second;
            result.curve.samples.push_back(
                {static_cast<double>(t) / 1000.0, static_cast<double>(level)});
        }
        // The run can end between sample ticks; close the curve at end_ms so
        // the stop level is part of it.
        if (result.curve.samples.back().t < static_cast<double>(end_ms) / 1000.0)
            result.curve.samples.push_back({static_cast<double>(end_ms) / 1000.0,
                                            static_cast<double>(infected)});
        return result;
    }
};

}  // namespace

SimResult run_simulation(const SimConfig& cfg) {
    if (cfg.initial_bots < 1) throw SimError("initial_bots must be >= 1");
    Engine engine(cfg);
    return engine.run();
}

double empirical_q(uint64_t episodes, uint32_t dictionary_size, uint32_t attempt_limit,
                   uint64_t seed) {
    if (dictionary_size == 0) throw SimError("dictionary_size must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<uint32_t> dist(0, dictionary_size - 1);
    uint64_t successes = 0;
    for (uint64_t e = 0; e < episodes; ++e) {
        uint32_t correct = dist(rng);
        for (uint32_t a = 0; a < attempt_limit; ++a) {
            if (dist(rng) == correct) {
                ++successes;
                break;
            }
        }
    }
    return episodes == 0 ? 0.0 : static_cast<double>(successes) / episodes;
}

model::InfectionCurve EnsembleResult::mean_curve() const {
    model::InfectionCurve curve;
    for (size_t i = 0; i < t_seconds.size(); ++i)
        curve.samples.push_back({t_seconds[i], mean_infected[i]});
    return curve;
}

EnsembleResult run_ensemble(const SimConfig& base, uint32_t seeds,
                            double time_to_fraction, unsigned threads) {
    if (seeds == 0) throw SimError("need at least one seed");
    std::vector<SimResult> results(seeds);
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, seeds);
    std::vector<std::thread> pool;
    std::atomic<uint32_t> next{0};
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (;;) {
                uint32_t i = next.fetch_add(1);
                if (i >= seeds) return;
                SimConfig cfg = base;
                cfg.population.seed = base.population.seed + i;
                results[i] = run_simulation(cfg);
            }
        });
    for (auto& t : pool) t.join();

    EnsembleResult ens;
    size_t max_len = 0;
    for (const auto& r : results) max_len = std::max(max_len, r.curve.samples.size());
    ens.t_seconds.resize(max_len);
    for (size_t i = 0; i < max_len; ++i)
        ens.t_seconds[i] = static_cast<double>(i) * base.sample_interval_ms / 1000.0;
    ens.mean_infected.resize(max_len);
    ens.p5.resize(max_len);
    ens.p95.resize(max_len);
    std::vector<double> column(seeds);
    for (size_t i = 0; i < max_len; ++i) {
        for (uint32_t s = 0; s < seeds; ++s) {
            const auto& samples = results[s].curve.samples;
            // Seeds that stopped early hold their final level.
            column[s] = i < samples.size() ? samples[i].infected
                                           : samples.back().infected;
        }
        double sum = 0;
        for (double v : column) sum += v;
        ens.mean_infected[i] = sum / seeds;
        std::vector<double> sorted = column;
        std::sort(sorted.begin(), sorted.end());
        auto quantile = [&](double p) {
            double idx = p * (seeds - 1);
            size_t lo = static_cast<size_t>(idx);
            size_t hi = std::min<size_t>(lo + 1, seeds - 1);
            double f = idx - lo;
            return sorted[lo] * (1 - f) + sorted[hi] * f;
        };
        ens.p5[i] = quantile(0.05);
        ens.p95[i] = quantile(0.95);
    }
    double reached_sum = 0;
    uint32_t reached_n = 0;
    uint64_t vuln = generate_population(base.population).vulnerable_count;
    for (const auto& r : results) {
        std::optional<double> t;
        if (time_to_fraction > 0) {
            double target = time_to_fraction * static_cast<double>(vuln);
            t = model::time_to_count(r.curve, target);
        }
        ens.per_seed_time_to_fraction.push_back(t);
        if (t) {
            reached_sum += *t;
            ++reached_n;
        }
    }
    if (reached_n > 0) ens.mean_time_to_fraction = reached_sum / reached_n;
    return ens;
}

void write_ensemble_csv(const std::string& path, const EnsembleResult& ens) {
    std::ofstream out(path);
    if (!out) throw SimError("cannot open for writing: " + path);
    out << "t_seconds,mean_infected,p5,p95\n";
    char buf[128];
    for (size_t i = 0; i < ens.t_seconds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.3f,%.6f,%.6f,%.6f\n", ens.t_seconds[i],
                      ens.mean_infected[i], ens.p5[i], ens.p95[i]);
        out << buf;
    }
}

}  // namespace iotemu::botsim
