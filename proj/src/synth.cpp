#include "waitcast/synth.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

namespace waitcast {

std::string_view to_string(TimeWeight w) noexcept {
  switch (w) {
    case TimeWeight::uniform: return "uniform";
    case TimeWeight::front_loaded: return "front-loaded";
    case TimeWeight::bimodal_edges: return "bimodal-edges";
  }
  return "uniform";
}

TimeWeight parse_time_weight(std::string_view text) {
  if (text == "uniform") return TimeWeight::uniform;
  if (text == "front-loaded") return TimeWeight::front_loaded;
  if (text == "bimodal-edges") return TimeWeight::bimodal_edges;
  throw Error(Errc::invalid_config, "unknown time weight '" + std::string(text) + "'");
}

double time_weight(TimeWeight shape, int second) noexcept {
  const double t = second;
  switch (shape) {
    case TimeWeight::uniform:
      return 1.0;
    case TimeWeight::front_loaded:
      return 0.25 + 2.5 * std::exp(-t / 90.0);
    case TimeWeight::bimodal_edges:
      return 0.15 + 2.0 * (std::exp(-t / 60.0) + std::exp(-(kTaskSeconds - 1 - t) / 60.0));
  }
  return 1.0;
}

void BurstProfile::validate() const {
  if (!(onset_hazard >= 0.0 && onset_hazard <= 1.0))
    throw Error(Errc::invalid_config, "onset_hazard must lie in [0, 1]");
  if (!(mean_burst_s >= 1.0)) throw Error(Errc::invalid_config, "mean_burst_s must be >= 1");
}

std::map<Stratum, BurstProfile> CohortConfig::default_profiles() {
  std::map<Stratum, BurstProfile> p;
  const TimeWeight shapes[] = {TimeWeight::uniform, TimeWeight::front_loaded, TimeWeight::bimodal_edges};
  for (std::size_t a = 0; a < kAges.size(); ++a) {
    p[{kAges[a], Category::problem}] = {0.02, 6.0, shapes[a]};
    p[{kAges[a], Category::unrelated}] = {0.012, 4.0, shapes[a]};
  }
  return p;
}

void CohortConfig::validate() const {
  if (n_children < 4) throw Error(Errc::invalid_config, "n_children must be >= 4");
  for (const auto& st : all_strata()) {
    auto it = profiles.find(st);
    if (it == profiles.end()) throw Error(Errc::invalid_config, "missing profile for " + stratum_label(st));
    it->second.validate();
  }
}

CohortConfig CohortConfig::from_keyvalue(const KeyValueFile& kv, const std::string& prefix) {
  CohortConfig cfg;
  cfg.n_children = kv.get_int(prefix + "n_children", cfg.n_children);
  cfg.seed = kv.get_u64(prefix + "seed", cfg.seed);
  for (auto& [st, profile] : cfg.profiles) {
    const auto base = prefix + stratum_label(st) + ".";
    profile.onset_hazard = kv.get_double(base + "onset_hazard", profile.onset_hazard);
    profile.mean_burst_s = kv.get_double(base + "mean_burst_s", profile.mean_burst_s);
    profile.shape = parse_time_weight(kv.get_string(base + "time_weight", std::string(to_string(profile.shape))));
  }
  cfg.validate();
  return cfg;
}

void CohortConfig::to_keyvalue(KeyValueFile& kv, const std::string& prefix) const {
  kv.set(prefix + "n_children", std::to_string(n_children));
  kv.set(prefix + "seed", std::to_string(seed));
  for (const auto& [st, profile] : profiles) {
    const auto base = prefix + stratum_label(st) + ".";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", profile.onset_hazard);
    kv.set(base + "onset_hazard", buf);
    std::snprintf(buf, sizeof buf, "%.17g", profile.mean_burst_s);
    kv.set(base + "mean_burst_s", buf);
    kv.set(base + "time_weight", std::string(to_string(profile.shape)));
  }
}

UtteranceSeries generate_child(const BurstProfile& profile, Rng& rng, std::string child_id, Age age,
                               Category category) {
  profile.validate();
  std::vector<std::uint8_t> values(kTaskSeconds, 0);
  const double stop = 1.0 / profile.mean_burst_s;
  bool speaking = false;
  for (int t = 1; t < kTaskSeconds; ++t) {
    if (speaking) {
      speaking = !rng.bernoulli(stop);
    } else {
      const double onset = std::clamp(profile.onset_hazard * time_weight(profile.shape, t), 0.0, 1.0);
      speaking = rng.bernoulli(onset);
    }
    values[static_cast<std::size_t>(t)] = speaking ? 1 : 0;
  }
  return UtteranceSeries(std::move(child_id), age, category, std::move(values));
}

std::string child_id_for(int index, int n_children) {
  const int width = std::max(2, static_cast<int>(std::to_string(n_children).size()));
  auto digits = std::to_string(index + 1);
  return "c" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0') +
         digits;
}

Dataset generate_cohort(const CohortConfig& cfg, Execution exec) {
  cfg.validate();
  const auto strata = all_strata();
  const int n = cfg.n_children;
  const int tasks = n * static_cast<int>(strata.size());
  std::vector<std::vector<std::uint8_t>> values(static_cast<std::size_t>(tasks));

  auto run = [&](int task) {
    const auto& st = strata[static_cast<std::size_t>(task / n)];
    const int child = task % n;
    auto rng = Rng::substream(cfg.seed, {static_cast<std::uint64_t>(years(st.age)),
                                         static_cast<std::uint64_t>(st.category), static_cast<std::uint64_t>(child)});
    values[static_cast<std::size_t>(task)] =
        generate_child(cfg.profiles.at(st), rng, child_id_for(child, n), st.age, st.category).values();
  };

  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
    for (int task = 0; task < tasks; ++task) run(task);
  } else {
    for (int task = 0; task < tasks; ++task) run(task);
  }

  Dataset ds;
  for (int task = 0; task < tasks; ++task) {
    const auto& st = strata[static_cast<std::size_t>(task / n)];
    ds.insert(UtteranceSeries(child_id_for(task % n, n), st.age, st.category,
                              std::move(values[static_cast<std::size_t>(task)])));
  }
  return ds;
}

}  // namespace waitcast
