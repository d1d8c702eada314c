#pragma once
#include <optional>
#include <string>
#include <vector>

#include "oujm/dataset.hpp"

namespace oujm {

// All times are fractional days from the subject's study start.

struct CigaretteReport {
  int count = 0;            // ignored when more_than_10 is set
  bool more_than_10 = false;
  double t_first = 0.0, t_last = 0.0;  // equal for a single reported time
};

// Distribution rules: 1 cigarette at its reported time; n >= 2 evenly
// spaced over [first, last] inclusive of the endpoints; "more than 10" at
// one per hour from the start of the interval. Afterwards, consecutive
// events spanning less than one hour collapse to the span midpoint.
std::vector<double> cigarettes_to_events(const CigaretteReport& report);

// 0 puffs -> 0 events, 1-15 -> 1, 16-25 -> 2, then one more event per
// further 10 puffs. Placement reuses the cigarette rules (a single event
// over an interval goes to the interval midpoint).
int puff_event_count(int puffs);
std::vector<double> puffs_to_events(int puffs, double t_first, double t_last);

struct CensorResult {
  bool included = false;
  double censor_time = 0.0;
  std::string reason;  // reason code when excluded
};

// Censors at the last completed EMA preceding any response gap longer than
// 48 hours; excludes subjects whose first completed EMA is after 48 hours
// (or who never completed one).
CensorResult apply_censoring(const std::vector<double>& response_times);

struct ExclusionRecord {
  int subject_id = 0;
  std::string reason;
};

struct IngestResult {
  Dataset data;
  std::vector<ExclusionRecord> exclusions;
};

// Reads the EMA and treatment CSVs documented in docs/schema.md and emits
// the simulator bundle tables plus exclusion records.
IngestResult build_dataset(const std::string& ema_csv, const std::string& trt_csv);

void write_ingest_output(const IngestResult& result, const std::string& dir);

// ISO-8601 timestamp (YYYY-MM-DDTHH:MM:SS, optional trailing Z) to seconds
// since the Unix epoch.
long long parse_iso8601(const std::string& ts);

}  // namespace oujm
