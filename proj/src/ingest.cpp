#include "oujm/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace oujm {
namespace {

constexpr double kHour = 1.0 / 24.0;
constexpr double kGapDays = 2.0;  // 48-hour rule

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::stringstream ss(line);
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

// consecutive events spanning < 1 hour collapse to the span midpoint
std::vector<double> consolidate(std::vector<double> times) {
  std::sort(times.begin(), times.end());
  std::vector<double> out;
  std::size_t i = 0;
  while (i < times.size()) {
    std::size_t j = i;
    while (j + 1 < times.size() && times[j + 1] - times[i] < kHour - 1e-12) ++j;
    out.push_back(0.5 * (times[i] + times[j]));
    i = j + 1;
  }
  return out;
}

std::vector<double> distribute(int n, double a, double b) {
  std::vector<double> out;
  if (n <= 0) return out;
  if (n == 1) {
    out.push_back(a == b ? a : 0.5 * (a + b));
    return out;
  }
  for (int i = 0; i < n; ++i)
    out.push_back(a + (b - a) * static_cast<double>(i) / (n - 1));
  return out;
}

}  // namespace

std::vector<double> cigarettes_to_events(const CigaretteReport& report) {
  if (report.t_last < report.t_first)
    throw OrderingError("cigarette interval end precedes start");
  std::vector<double> times;
  if (report.more_than_10) {
    for (double t = report.t_first; t <= report.t_last + 1e-12; t += kHour)
      times.push_back(t);
  } else if (report.count == 1) {
    times.push_back(report.t_first);  // single reported time, no interval
  } else if (report.count >= 2) {
    times = distribute(report.count, report.t_first, report.t_last);
  }
  return consolidate(times);
}

int puff_event_count(int puffs) {
  if (puffs < 0) throw InvalidInputError("negative puff count");
  if (puffs == 0) return 0;
  if (puffs <= 15) return 1;
  if (puffs <= 25) return 2;
  return 2 + (puffs - 26) / 10 + 1;
}

std::vector<double> puffs_to_events(int puffs, double t_first, double t_last) {
  if (t_last < t_first) throw OrderingError("vaping interval end precedes start");
  return consolidate(distribute(puff_event_count(puffs), t_first, t_last));
}

CensorResult apply_censoring(const std::vector<double>& response_times) {
  CensorResult res;
  if (response_times.empty()) {
    res.reason = "no_completed_ema";
    return res;
  }
  if (response_times.front() > kGapDays) {
    res.reason = "no_ema_first_48h";
    return res;
  }
  res.included = true;
  res.censor_time = response_times.back();
  for (std::size_t i = 0; i + 1 < response_times.size(); ++i)
    if (response_times[i + 1] - response_times[i] > kGapDays) {
      res.censor_time = response_times[i];
      break;
    }
  return res;
}

long long parse_iso8601(const std::string& ts) {
  std::tm tm{};
  int y, mo, d, h, mi, s;
  if (std::sscanf(ts.c_str(), "%d-%d-%dT%d:%d:%d", &y, &mo, &d, &h, &mi, &s) != 6)
    throw InvalidInputError("bad ISO-8601 timestamp: " + ts);
  tm.tm_year = y - 1900;
  tm.tm_mon = mo - 1;
  tm.tm_mday = d;
  tm.tm_hour = h;
  tm.tm_min = mi;
  tm.tm_sec = s;
  return static_cast<long long>(timegm(&tm));
}

namespace {

struct EmaSchema {
  int subject_id = -1, timestamp = -1, responded = -1;
  int mj_time = -1, cig_count = -1, cig_first = -1, cig_last = -1;
  int vape_puffs = -1, vape_first = -1, vape_last = -1;
  std::vector<int> emo;  // emo_* columns in header order
};

EmaSchema parse_header(const std::vector<std::string>& cols) {
  EmaSchema s;
  auto need = [&](const std::string& name) {
    auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end())
      throw DataInconsistencyError("ema file missing column: " + name);
    return static_cast<int>(it - cols.begin());
  };
  s.subject_id = need("subject_id");
  s.timestamp = need("timestamp");
  s.responded = need("responded");
  s.mj_time = need("mj_time");
  s.cig_count = need("cig_count");
  s.cig_first = need("cig_first");
  s.cig_last = need("cig_last");
  s.vape_puffs = need("vape_puffs");
  s.vape_first = need("vape_first");
  s.vape_last = need("vape_last");
  for (std::size_t i = 0; i < cols.size(); ++i)
    if (cols[i].rfind("emo_", 0) == 0) s.emo.push_back(static_cast<int>(i));
  if (s.emo.empty())
    throw DataInconsistencyError("ema file has no emo_* columns");
  return s;
}

struct RawEma {
  long long ts = 0;
  bool responded = false;
  std::vector<std::string> fields;
};

}  // namespace

IngestResult build_dataset(const std::string& ema_csv, const std::string& trt_csv) {
  std::ifstream ema_in(ema_csv);
  if (!ema_in) throw DataInconsistencyError("cannot open " + ema_csv);
  std::string line;
  if (!std::getline(ema_in, line))
    throw DataInconsistencyError("empty ema file: " + ema_csv);
  EmaSchema schema = parse_header(split_csv_line(line));

  std::map<int, std::vector<RawEma>> by_subject;
  long lineno = 1;
  while (std::getline(ema_in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) <= schema.vape_last)
      throw DataInconsistencyError("ema row " + std::to_string(lineno) +
                                   ": too few columns");
    RawEma row;
    row.ts = parse_iso8601(f[schema.timestamp]);
    row.responded = f[schema.responded] == "1";
    row.fields = std::move(f);
    by_subject[std::stoi(row.fields[schema.subject_id])].push_back(std::move(row));
  }

  std::map<int, std::vector<long long>> trt_by_subject;
  {
    std::ifstream trt_in(trt_csv);
    if (!trt_in) throw DataInconsistencyError("cannot open " + trt_csv);
    if (std::getline(trt_in, line)) {
      auto cols = split_csv_line(line);
      if (cols.size() < 2 || cols[0] != "subject_id" || cols[1] != "timestamp")
        throw DataInconsistencyError("treatment file header must be subject_id,timestamp");
    }
    long tline = 1;
    while (std::getline(trt_in, line)) {
      ++tline;
      if (line.empty()) continue;
      auto f = split_csv_line(line);
      if (f.size() < 2)
        throw DataInconsistencyError("treatment row " + std::to_string(tline) +
                                     ": too few columns");
      trt_by_subject[std::stoi(f[0])].push_back(parse_iso8601(f[1]));
    }
  }

  IngestResult result;
  result.data.k = static_cast<int>(schema.emo.size());
  result.data.p = 2;
  long dropped_events = 0;

  for (auto& [sid, rows] : by_subject) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawEma& a, const RawEma& b) { return a.ts < b.ts; });
    long long start = rows.front().ts;
    auto days = [&](long long ts) {
      return static_cast<double>(ts - start) / 86400.0;
    };

    std::vector<double> response_times;
    for (const RawEma& r : rows)
      if (r.responded) response_times.push_back(days(r.ts));
    CensorResult cens = apply_censoring(response_times);
    if (!cens.included) {
      result.exclusions.push_back({sid, cens.reason});
      continue;
    }

    SubjectData sub;
    sub.id = sid;
    sub.censor_time = cens.censor_time;

    std::vector<double> events;
    std::vector<std::vector<double>> obs_rows;
    for (const RawEma& r : rows) {
      if (!r.responded) continue;
      double t = days(r.ts);
      if (t <= cens.censor_time + 1e-12) {
        sub.obs_times.push_back(t);
        std::vector<double> y;
        for (int c : schema.emo) {
          const std::string& v = r.fields[c];
          y.push_back(v.empty() ? std::nan("") : std::stod(v));
        }
        obs_rows.push_back(std::move(y));
      }
      const auto& f = r.fields;
      if (!f[schema.mj_time].empty())
        events.push_back(days(parse_iso8601(f[schema.mj_time])));
      if (!f[schema.cig_count].empty()) {
        CigaretteReport rep;
        if (f[schema.cig_count] == ">10") {
          rep.more_than_10 = true;
        } else {
          rep.count = std::stoi(f[schema.cig_count]);
        }
        rep.t_first = days(parse_iso8601(f[schema.cig_first]));
        rep.t_last = f[schema.cig_last].empty() ? rep.t_first
                                                : days(parse_iso8601(f[schema.cig_last]));
        auto ev = cigarettes_to_events(rep);
        events.insert(events.end(), ev.begin(), ev.end());
      }
      if (!f[schema.vape_puffs].empty()) {
        int puffs = std::stoi(f[schema.vape_puffs]);
        double a = days(parse_iso8601(f[schema.vape_first]));
        double b = f[schema.vape_last].empty() ? a
                                               : days(parse_iso8601(f[schema.vape_last]));
        auto ev = puffs_to_events(puffs, a, b);
        events.insert(events.end(), ev.begin(), ev.end());
      }
    }
    sub.y = MatrixXd(obs_rows.size(), result.data.k);
    for (std::size_t r = 0; r < obs_rows.size(); ++r)
      for (int c = 0; c < result.data.k; ++c) sub.y(r, c) = obs_rows[r][c];

    std::sort(events.begin(), events.end());
    for (double e : events) {
      if (e > 0.0 && e <= sub.censor_time)
        sub.event_times.push_back(e);
      else
        ++dropped_events;  // outside the at-risk interval, clamped out
    }

    auto it = trt_by_subject.find(sid);
    if (it != trt_by_subject.end()) {
      for (long long ts : it->second) {
        double t = days(ts);
        if (t >= 0.0 && t <= sub.censor_time) sub.treatment_times.push_back(t);
      }
      std::sort(sub.treatment_times.begin(), sub.treatment_times.end());
    }
    result.data.subjects.push_back(std::move(sub));
  }

  result.data.manifest["generator"] = "ingest";
  result.data.manifest["source_ema"] = std::filesystem::path(ema_csv).filename();
  result.data.manifest["source_treatments"] = std::filesystem::path(trt_csv).filename();
  result.data.manifest["n_excluded"] = result.exclusions.size();
  result.data.manifest["events_dropped_outside_risk"] = dropped_events;
  return result;
}

void write_ingest_output(const IngestResult& result, const std::string& dir) {
  write_bundle(result.data, dir);
  std::ofstream out(std::filesystem::path(dir) / "exclusions.csv");
  if (!out) throw InvalidInputError("cannot write exclusions.csv in " + dir);
  out << "subject_id,reason\n";
  for (const auto& ex : result.exclusions) out << ex.subject_id << "," << ex.reason << "\n";
}

}  // namespace oujm
