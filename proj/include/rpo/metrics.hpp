#pragma once

// Metrics stream (one JSON object per line) and evaluation reports.

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rpo {

struct MetricsRecord {
  int64_t step = 0;
  int epoch = 0;
  std::string mode;
  double accuracy = 0.0;
  double mean_response_len = 0.0;
  double mean_decode_tokens = 0.0;
  double grad_norm = 0.0;
  double loss = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double degenerate_group_fraction = 0.0;
  uint32_t flags = 0;  // 1 = update rejected, 2 = all groups filtered

  // Batch size behind the per-step means; lets accounting weight records.
  int64_t samples = 0;
};

std::string to_json_line(const MetricsRecord& r);
MetricsRecord metrics_record_from_json(const std::string& line);

class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path);
  void write(const MetricsRecord& r);
  void flush();

 private:
  std::ofstream out_;
};

std::vector<MetricsRecord> load_metrics(const std::string& path);

struct TokenAccounting {
  double mean_decode_tokens = 0.0;
  std::vector<double> per_epoch;
  int64_t total_samples = 0;
};

// Sample-weighted when per-record counts are present, unweighted otherwise.
TokenAccounting token_accounting(std::span<const MetricsRecord> records);

// RPO over full-path mean decode tokens for paired streams.
double decode_token_ratio(std::span<const MetricsRecord> rpo_stream,
                          std::span<const MetricsRecord> full_stream);

struct EvalReport {
  std::string dataset_id;
  int n_samples = 0;
  // per_question[q][s] = base reward of sample s for question q.
  std::vector<std::vector<int>> per_question;
  double accuracy = 0.0;
  std::vector<double> pass_at;  // pass_at[i] = pass@(i+1)
  double mean_length = 0.0;
};

void save_eval_report(const EvalReport& report, const std::string& path);

}  // namespace rpo
