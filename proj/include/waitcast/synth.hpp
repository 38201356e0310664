#pragma once

#include "waitcast/data.hpp"
#include "waitcast/execution.hpp"
#include "waitcast/keyvalue.hpp"
#include "waitcast/rng.hpp"

#include <cstdint>
#include <map>
#include <string_view>

namespace waitcast {

/// Shape of the onset-rate multiplier over the 480 s task.
enum class TimeWeight { uniform, front_loaded, bimodal_edges };

std::string_view to_string(TimeWeight w) noexcept;
TimeWeight parse_time_weight(std::string_view text);

/// Multiplier at second t. Always >= 0.
double time_weight(TimeWeight shape, int second) noexcept;

/// Two-state burst model: silent -> speaking with probability
/// onset_hazard * time_weight(t) (clamped to [0,1]); speaking -> silent with
/// probability 1 / mean_burst_s, giving geometric burst lengths.
struct BurstProfile {
  double onset_hazard = 0.02;
  double mean_burst_s = 5.0;
  TimeWeight shape = TimeWeight::uniform;

  void validate() const;
};

struct CohortConfig {
  int n_children = 12;
  std::uint64_t seed = 7;
  std::map<Stratum, BurstProfile> profiles = default_profiles();

  /// Age 3 uniform, age 4 front-loaded, age 5 bimodal at the task edges.
  static std::map<Stratum, BurstProfile> default_profiles();

  void validate() const;
  /// Reads `n_children`, `seed` and `age<A>.<category>.{onset_hazard,mean_burst_s,time_weight}`.
  static CohortConfig from_keyvalue(const KeyValueFile& kv, const std::string& prefix = "");
  void to_keyvalue(KeyValueFile& kv, const std::string& prefix = "") const;
};

UtteranceSeries generate_child(const BurstProfile& profile, Rng& rng, std::string child_id = "c",
                               Age age = Age::three, Category category = Category::problem);

/// Child ids are `c01`, `c02`, ... (zero padded to a common width so that
/// lexicographic order equals numeric order).
std::string child_id_for(int index, int n_children);

/// n_children x 3 ages x 2 categories series. Every series draws from its
/// own substream keyed by (seed, age, category, child), so the output does
/// not depend on execution mode or thread count.
Dataset generate_cohort(const CohortConfig& cfg, Execution exec = Execution::parallel);

}  // namespace waitcast
