#include "oujm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "oujm/errors.hpp"

namespace oujm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw DataInconsistencyError("cannot open for writing: " + path.string());
  return f;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataInconsistencyError("cannot open for reading: " + path.string());
  return f;
}

}  // namespace

Dataset Dataset::rescaled(double scale) const {
  Dataset out = *this;
  const double inv = 1.0 / scale;
  out.delta_a *= inv;
  out.delta_b *= inv;
  if (out.quit_time) *out.quit_time *= inv;
  for (auto& s : out.subjects) {
    for (auto& t : s.obs_times) t *= inv;
    for (auto& t : s.treatment_times) t *= inv;
    for (auto& t : s.event_times) t *= inv;
    for (auto& t : s.true_eta_times) t *= inv;
    s.censor_time *= inv;
  }
  out.manifest["time_rescale_factor"] = scale;
  return out;
}

void write_bundle(const Dataset& data, const std::string& dir) {
  fs::create_directories(dir);
  const fs::path root(dir);

  {
    auto f = open_out(root / "observations.csv");
    f << "subject_id,time";
    for (int j = 0; j < data.k; ++j) f << ",y" << (j + 1);
    f << "\n";
    for (const auto& s : data.subjects)
      for (std::size_t i = 0; i < s.obs_times.size(); ++i) {
        f << s.id << "," << format_double(s.obs_times[i]);
        for (int j = 0; j < data.k; ++j) {
          f << ",";
          const double v = s.y(static_cast<int>(i), j);
          if (!std::isnan(v)) f << format_double(v);
        }
        f << "\n";
      }
  }
  {
    auto f = open_out(root / "events.csv");
    f << "subject_id,time\n";
    for (const auto& s : data.subjects)
      for (double t : s.event_times) f << s.id << "," << format_double(t) << "\n";
  }
  {
    auto f = open_out(root / "treatments.csv");
    f << "subject_id,time\n";
    for (const auto& s : data.subjects)
      for (double t : s.treatment_times)
        f << s.id << "," << format_double(t) << "\n";
  }
  {
    auto f = open_out(root / "subjects.csv");
    f << "subject_id,censor_time\n";
    for (const auto& s : data.subjects)
      f << s.id << "," << format_double(s.censor_time) << "\n";
  }

  const bool has_truth =
      std::any_of(data.subjects.begin(), data.subjects.end(),
                  [](const SubjectData& s) { return !s.true_eta_times.empty(); });
  if (has_truth) {
    auto f = open_out(root / "latent_truth.csv");
    f << "subject_id,time";
    for (int j = 0; j < data.p; ++j) f << ",eta" << (j + 1);
    f << "\n";
    for (const auto& s : data.subjects)
      for (std::size_t i = 0; i < s.true_eta_times.size(); ++i) {
        f << s.id << "," << format_double(s.true_eta_times[i]);
        for (int j = 0; j < data.p; ++j)
          f << "," << format_double(s.true_eta(static_cast<int>(i), j));
        f << "\n";
      }
    auto g = open_out(root / "intercept_truth.csv");
    g << "subject_id";
    for (int j = 0; j < data.k; ++j) g << ",u" << (j + 1);
    g << "\n";
    for (const auto& s : data.subjects) {
      g << s.id;
      for (int j = 0; j < data.k; ++j) g << "," << format_double(s.true_u(j));
      g << "\n";
    }
  }

  json manifest = data.manifest;
  manifest["k"] = data.k;
  manifest["p"] = data.p;
  manifest["delta_a"] = data.delta_a;
  manifest["delta_b"] = data.delta_b;
  if (data.quit_time) manifest["quit_time"] = *data.quit_time;
  auto f = open_out(root / "manifest.json");
  f << manifest.dump(2) << "\n";
}

Dataset read_bundle(const std::string& dir) {
  const fs::path root(dir);
  Dataset data;
  {
    auto f = open_in(root / "manifest.json");
    f >> data.manifest;
  }
  data.k = data.manifest.at("k").get<int>();
  data.p = data.manifest.at("p").get<int>();
  data.delta_a = data.manifest.at("delta_a").get<double>();
  data.delta_b = data.manifest.at("delta_b").get<double>();
  if (data.manifest.contains("quit_time"))
    data.quit_time = data.manifest["quit_time"].get<double>();

  std::map<int, SubjectData> by_id;
  std::string line;

  {
    auto f = open_in(root / "subjects.csv");
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto cols = split_csv(line);
      SubjectData s;
      s.id = std::stoi(cols[0]);
      s.censor_time = std::stod(cols[1]);
      by_id[s.id] = std::move(s);
    }
  }
  {
    auto f = open_in(root / "observations.csv");
    std::getline(f, line);
    std::map<int, std::vector<std::pair<double, std::vector<double>>>> rows;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto cols = split_csv(line);
      if (static_cast<int>(cols.size()) != 2 + data.k)
        throw DataInconsistencyError("observations.csv: wrong column count");
      std::vector<double> y(data.k);
      for (int j = 0; j < data.k; ++j)
        y[j] = cols[2 + j].empty() ? std::nan("") : std::stod(cols[2 + j]);
      rows[std::stoi(cols[0])].emplace_back(std::stod(cols[1]), std::move(y));
    }
    for (auto& [id, obs] : rows) {
      auto& s = by_id.at(id);
      s.obs_times.reserve(obs.size());
      s.y.resize(static_cast<int>(obs.size()), data.k);
      for (std::size_t i = 0; i < obs.size(); ++i) {
        s.obs_times.push_back(obs[i].first);
        for (int j = 0; j < data.k; ++j) s.y(static_cast<int>(i), j) = obs[i].second[j];
      }
    }
  }
  auto read_times = [&](const char* name, std::vector<double> SubjectData::*field) {
    auto f = open_in(root / name);
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto cols = split_csv(line);
      (by_id.at(std::stoi(cols[0])).*field).push_back(std::stod(cols[1]));
    }
  };
  read_times("events.csv", &SubjectData::event_times);
  read_times("treatments.csv", &SubjectData::treatment_times);

  if (fs::exists(root / "latent_truth.csv")) {
    auto f = open_in(root / "latent_truth.csv");
    std::getline(f, line);
    std::map<int, std::vector<std::pair<double, std::vector<double>>>> rows;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto cols = split_csv(line);
      std::vector<double> eta(data.p);
      for (int j = 0; j < data.p; ++j) eta[j] = std::stod(cols[2 + j]);
      rows[std::stoi(cols[0])].emplace_back(std::stod(cols[1]), std::move(eta));
    }
    for (auto& [id, grid] : rows) {
      auto& s = by_id.at(id);
      s.true_eta.resize(static_cast<int>(grid.size()), data.p);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        s.true_eta_times.push_back(grid[i].first);
        for (int j = 0; j < data.p; ++j) s.true_eta(static_cast<int>(i), j) = grid[i].second[j];
      }
    }
  }
  if (fs::exists(root / "intercept_truth.csv")) {
    auto f = open_in(root / "intercept_truth.csv");
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto cols = split_csv(line);
      auto& s = by_id.at(std::stoi(cols[0]));
      s.true_u.resize(data.k);
      for (int j = 0; j < data.k; ++j) s.true_u(j) = std::stod(cols[1 + j]);
    }
  }

  data.subjects.reserve(by_id.size());
  for (auto& [id, s] : by_id) data.subjects.push_back(std::move(s));
  return data;
}

}  // namespace oujm
