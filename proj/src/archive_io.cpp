#include <filesystem>
#include <fstream>
#include <sstream>

#include "oujm/mcmc.hpp"

namespace fs = std::filesystem;

namespace oujm {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_archive(const PosteriorArchive& archive, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "latent");

  nlohmann::json man;
  man["format"] = "posterior-archive";
  man["version"] = 1;
  man["model"] = archive.config.to_json();
  man["sampler"] = archive.sampler.to_json();
  man["names"] = archive.names;
  man["n_subjects"] = archive.grid_times.size();
  nlohmann::json acc = nlohmann::json::array();
  for (const auto& c : archive.chains) acc.push_back(c.accept_rates);
  man["accept_rates"] = acc;
  man["rhat"] = archive.rhat;
  std::ofstream(fs::path(dir) / "manifest.json") << man.dump(2) << "\n";

  std::ofstream samples(fs::path(dir) / "samples.csv");
  samples << "chain,draw,logpost";
  for (const auto& n : archive.names) samples << "," << n;
  samples << "\n";
  for (std::size_t c = 0; c < archive.chains.size(); ++c) {
    const ChainResult& ch = archive.chains[c];
    for (long r = 0; r < ch.samples.rows(); ++r) {
      samples << c << "," << r << "," << format_double(ch.logpost[r]);
      for (long j = 0; j < ch.samples.cols(); ++j)
        samples << "," << format_double(ch.samples(r, j));
      samples << "\n";
    }
  }

  std::ofstream grid(fs::path(dir) / "latent" / "grid.csv");
  grid << "subject,idx,time\n";
  for (std::size_t s = 0; s < archive.grid_times.size(); ++s)
    for (std::size_t j = 0; j < archive.grid_times[s].size(); ++j)
      grid << s << "," << j << "," << format_double(archive.grid_times[s][j]) << "\n";

  for (std::size_t s = 0; s < archive.grid_times.size(); ++s) {
    std::ofstream lat(fs::path(dir) / "latent" / ("subject_" + std::to_string(s) + ".csv"));
    lat << "chain,draw,factor";
    for (std::size_t j = 0; j < archive.grid_times[s].size(); ++j) lat << ",t" << j;
    lat << "\n";
    for (std::size_t c = 0; c < archive.chains.size(); ++c) {
      const ChainResult& ch = archive.chains[c];
      for (std::size_t d = 0; d < ch.latent.size(); ++d) {
        const MatrixXd& eta = ch.latent[d][s];
        for (long f = 0; f < eta.rows(); ++f) {
          lat << c << "," << ch.latent_iters[d] << "," << f;
          for (long j = 0; j < eta.cols(); ++j) lat << "," << format_double(eta(f, j));
          lat << "\n";
        }
      }
    }
  }
}

PosteriorArchive read_archive(const std::string& dir) {
  PosteriorArchive arch;
  nlohmann::json man;
  open_in(fs::path(dir) / "manifest.json") >> man;
  if (man.value("format", "") != "posterior-archive")
    throw InvalidInputError("not a posterior archive: " + dir);
  arch.config = ModelConfig::from_json(man.at("model"));
  arch.sampler = SamplerConfig::from_json(man.at("sampler"));
  arch.names = man.at("names").get<std::vector<std::string>>();
  arch.rhat = man.at("rhat").get<std::map<std::string, double>>();
  std::size_t nsub = man.at("n_subjects");
  std::size_t nchain = man.at("accept_rates").size();
  arch.chains.resize(nchain);
  for (std::size_t c = 0; c < nchain; ++c)
    arch.chains[c].accept_rates =
        man.at("accept_rates")[c].get<std::map<std::string, double>>();

  {
    auto in = open_in(fs::path(dir) / "latent" / "grid.csv");
    std::string line;
    std::getline(in, line);
    arch.grid_times.resize(nsub);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_line(line);
      arch.grid_times.at(std::stoul(f[0])).push_back(std::stod(f[2]));
    }
  }

  {
    auto in = open_in(fs::path(dir) / "samples.csv");
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<VectorXd>> rows(nchain);
    std::vector<std::vector<double>> lps(nchain);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_line(line);
      std::size_t c = std::stoul(f[0]);
      lps.at(c).push_back(std::stod(f[2]));
      VectorXd v(arch.names.size());
      for (std::size_t j = 0; j < arch.names.size(); ++j) v[j] = std::stod(f[3 + j]);
      rows.at(c).push_back(v);
    }
    for (std::size_t c = 0; c < nchain; ++c) {
      arch.chains[c].logpost = lps[c];
      arch.chains[c].samples = MatrixXd(rows[c].size(), arch.names.size());
      for (std::size_t r = 0; r < rows[c].size(); ++r)
        arch.chains[c].samples.row(r) = rows[c][r].transpose();
    }
  }

  int p = arch.config.pattern.p;
  for (std::size_t s = 0; s < nsub; ++s) {
    auto in = open_in(fs::path(dir) / "latent" / ("subject_" + std::to_string(s) + ".csv"));
    std::string line;
    std::getline(in, line);
    std::size_t n = arch.grid_times[s].size();
    // rows arrive grouped by (chain, draw) with factors in order
    std::vector<std::map<int, MatrixXd>> per_chain(nchain);
    std::vector<std::vector<int>> draw_order(nchain);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = split_line(line);
      std::size_t c = std::stoul(f[0]);
      int draw = std::stoi(f[1]);
      int fac = std::stoi(f[2]);
      auto& m = per_chain.at(c);
      if (!m.count(draw)) {
        m[draw] = MatrixXd::Zero(p, n);
        draw_order[c].push_back(draw);
      }
      for (std::size_t j = 0; j < n; ++j) m[draw](fac, j) = std::stod(f[3 + j]);
    }
    for (std::size_t c = 0; c < nchain; ++c) {
      ChainResult& ch = arch.chains[c];
      if (s == 0) {
        ch.latent.assign(draw_order[c].size(), std::vector<MatrixXd>(nsub));
        ch.latent_iters = draw_order[c];
      }
      for (std::size_t d = 0; d < draw_order[c].size(); ++d)
        ch.latent[d][s] = per_chain[c][draw_order[c][d]];
    }
  }
  return arch;
}

}  // namespace oujm
