#include "rpo/metrics.hpp"

#include <stdexcept>

#include "json.hpp"

namespace rpo {

using ordered_json = nlohmann::ordered_json;

std::string to_json_line(const MetricsRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  j["mode"] = r.mode;
  j["accuracy"] = r.accuracy;
  j["mean_response_len"] = r.mean_response_len;
  j["mean_decode_tokens"] = r.mean_decode_tokens;
  j["grad_norm"] = r.grad_norm;
  j["loss"] = r.loss;
  j["kl"] = r.kl;
  j["clip_fraction"] = r.clip_fraction;
  j["degenerate_group_fraction"] = r.degenerate_group_fraction;
  j["flags"] = r.flags;
  j["samples"] = r.samples;
  return j.dump();
}

MetricsRecord metrics_record_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  MetricsRecord r;
  r.step = j.at("step").get<int64_t>();
  r.epoch = j.at("epoch").get<int>();
  r.mode = j.at("mode").get<std::string>();
  r.accuracy = j.at("accuracy").get<double>();
  r.mean_response_len = j.at("mean_response_len").get<double>();
  r.mean_decode_tokens = j.at("mean_decode_tokens").get<double>();
  r.grad_norm = j.at("grad_norm").get<double>();
  r.loss = j.at("loss").get<double>();
  r.kl = j.at("kl").get<double>();
  r.clip_fraction = j.at("clip_fraction").get<double>();
  r.degenerate_group_fraction = j.at("degenerate_group_fraction").get<double>();
  r.flags = j.at("flags").get<uint32_t>();
  r.samples = j.value("samples", int64_t{0});
  return r;
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open metrics file: " + path);
}

void MetricsWriter::write(const MetricsRecord& r) {
  out_ << to_json_line(r) << '\n';
  if (!out_) throw std::runtime_error("metrics write failed");
}

void MetricsWriter::flush() { out_.flush(); }

std::vector<MetricsRecord> load_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(metrics_record_from_json(line));
    } catch (const std::exception& e) {
      throw std::runtime_error("metrics line " + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return out;
}

TokenAccounting token_accounting(std::span<const MetricsRecord> records) {
  if (records.empty()) {
    throw std::invalid_argument("token_accounting requires records");
  }
  bool weighted = true;
  for (const MetricsRecord& r : records) {
    if (r.samples <= 0) weighted = false;
  }
  TokenAccounting acc;
  int max_epoch = 0;
  for (const MetricsRecord& r : records) {
    max_epoch = std::max(max_epoch, r.epoch);
  }
  std::vector<double> sums(max_epoch + 1, 0.0);
  std::vector<double> weights(max_epoch + 1, 0.0);
  double total = 0.0;
  double total_w = 0.0;
  for (const MetricsRecord& r : records) {
    double w = weighted ? static_cast<double>(r.samples) : 1.0;
    sums[r.epoch] += w * r.mean_decode_tokens;
    weights[r.epoch] += w;
    total += w * r.mean_decode_tokens;
    total_w += w;
    acc.total_samples += r.samples;
  }
  acc.mean_decode_tokens = total / total_w;
  acc.per_epoch.resize(max_epoch + 1, 0.0);
  for (int e = 0; e <= max_epoch; ++e) {
    acc.per_epoch[e] = weights[e] > 0 ? sums[e] / weights[e] : 0.0;
  }
  return acc;
}

double decode_token_ratio(std::span<const MetricsRecord> rpo_stream,
                          std::span<const MetricsRecord> full_stream) {
  double a = token_accounting(rpo_stream).mean_decode_tokens;
  double b = token_accounting(full_stream).mean_decode_tokens;
  if (b == 0.0) throw std::runtime_error("full-path stream has zero tokens");
  return a / b;
}

void save_eval_report(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  ordered_json header;
  header["dataset_id"] = report.dataset_id;
  header["n_samples"] = report.n_samples;
  header["accuracy"] = report.accuracy;
  header["pass_at"] = report.pass_at;
  header["mean_length"] = report.mean_length;
  out << header.dump() << '\n';
  for (size_t q = 0; q < report.per_question.size(); ++q) {
    out << q;
    for (int v : report.per_question[q]) out << '\t' << v;
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace rpo
