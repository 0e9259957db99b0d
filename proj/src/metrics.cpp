#include "slotrl/metrics.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace slotrl {

const char* const kMetricsCsvHeader =
    "env_step,return_mean,return_std,success_rate,loss_world_model,loss_critic,"
    "loss_actor,loss_temperature,alpha,entropy";

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

bool MetricsRow::operator==(const MetricsRow& o) const {
  return env_step == o.env_step && return_mean == o.return_mean &&
         return_std == o.return_std && success_rate == o.success_rate &&
         loss_world_model == o.loss_world_model && loss_critic == o.loss_critic &&
         loss_actor == o.loss_actor && loss_temperature == o.loss_temperature &&
         alpha == o.alpha && entropy == o.entropy;
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  os << kMetricsCsvHeader << "\n";
  for (const auto& r : rows) {
    os << r.env_step << "," << num(r.return_mean) << "," << num(r.return_std) << ","
       << num(r.success_rate) << "," << num(r.loss_world_model) << "," << num(r.loss_critic)
       << "," << num(r.loss_actor) << "," << num(r.loss_temperature) << "," << num(r.alpha)
       << "," << num(r.entropy) << "\n";
  }
  return os.str();
}

std::string metrics_jsonl(const std::vector<MetricsRow>& rows) {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << "{\"env_step\":" << r.env_step << ",\"return_mean\":" << num(r.return_mean)
       << ",\"return_std\":" << num(r.return_std) << ",\"success_rate\":" << num(r.success_rate)
       << ",\"loss_world_model\":" << num(r.loss_world_model)
       << ",\"loss_critic\":" << num(r.loss_critic) << ",\"loss_actor\":" << num(r.loss_actor)
       << ",\"loss_temperature\":" << num(r.loss_temperature) << ",\"alpha\":" << num(r.alpha)
       << ",\"entropy\":" << num(r.entropy)
       << ",\"wall_clock_seconds\":" << num(r.wall_clock_seconds) << "}\n";
  }
  return os.str();
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("metrics csv: empty file");
  if (line != kMetricsCsvHeader) throw std::runtime_error("metrics csv: unexpected header");
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw std::runtime_error("metrics csv: bad row '" + line + "'");
    MetricsRow r;
    r.env_step = std::stoll(cells[0]);
    r.return_mean = std::stod(cells[1]);
    r.return_std = std::stod(cells[2]);
    r.success_rate = std::stod(cells[3]);
    r.loss_world_model = std::stod(cells[4]);
    r.loss_critic = std::stod(cells[5]);
    r.loss_actor = std::stod(cells[6]);
    r.loss_temperature = std::stod(cells[7]);
    r.alpha = std::stod(cells[8]);
    r.entropy = std::stod(cells[9]);
    rows.push_back(r);
  }
  return rows;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

}  // namespace slotrl
