#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace slotrl {

struct MetricsRow {
  std::int64_t env_step = 0;
  double return_mean = 0.0;
  double return_std = 0.0;
  double success_rate = 0.0;
  double loss_world_model = 0.0;
  double loss_critic = 0.0;
  double loss_actor = 0.0;
  double loss_temperature = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
  double wall_clock_seconds = 0.0;

  bool operator==(const MetricsRow& o) const;
};

// Fixed column order. Wall-clock time goes to the JSONL stream only so that
// identically-seeded runs produce bitwise-identical CSVs.
extern const char* const kMetricsCsvHeader;

std::string metrics_csv(const std::vector<MetricsRow>& rows);
std::string metrics_jsonl(const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

void write_file(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace slotrl
