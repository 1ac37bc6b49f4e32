#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rpo/harness.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

std::optional<std::string> opt_str(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s;
}

std::vector<double> parse_doubles(const std::vector<std::string>& items) {
  std::vector<double> out;
  for (const std::string& s : items) out.push_back(std::stod(s));
  return out;
}

void write_json(const ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for write: " + path);
  out << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rpo: a replay-based policy optimization laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string checkpoint_path;
  std::string dataset_path;
  std::string cache_path;
  int n_samples = 16;
  double temperature = 0.7;
  int max_gen_len = 64;
  uint64_t seed = 0;
  int steps = 200;
  double probe_lr = 0.0;
  int samples_per_point = 32;
  std::vector<std::string> lengths_csv;
  std::vector<std::string> alphas_csv = {"0", "0.01", "0.05"};
  int ref_samples = 64;
  int trials = 64;

  CLI::App* init_cache_cmd =
      app.add_subcommand("init-cache", "Sample one answer per question into a cache file");
  init_cache_cmd->add_option("--config", config_path, "run config file")->required();
  init_cache_cmd->add_option("--out", out_path, "cache file to write")->required();
  init_cache_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint (default: fresh policy)");

  CLI::App* train_cmd = app.add_subcommand("train", "Run the training loop");
  train_cmd->add_option("--config", config_path, "run config file")->required();
  train_cmd->add_option("--out", out_path, "output directory")->required();
  train_cmd->add_option("--cache", cache_path, "pre-initialized cache file");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (accuracy, pass@N)");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  eval_cmd->add_option("--dataset", dataset_path, "dataset TSV")->required();
  eval_cmd->add_option("--n", n_samples, "samples per question");
  eval_cmd->add_option("--temperature", temperature, "sampling temperature");
  eval_cmd->add_option("--max-gen-len", max_gen_len, "generation budget");
  eval_cmd->add_option("--seed", seed, "sampling seed");
  eval_cmd->add_option("--out", out_path, "report file (default: eval_report.txt)");

  CLI::App* prefix_cmd = app.add_subcommand(
      "probe-prefix", "Continuation accuracy vs reference-prefix length");
  prefix_cmd->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  prefix_cmd->add_option("--dataset", dataset_path, "dataset TSV")->required();
  prefix_cmd->add_option("--lengths", lengths_csv, "prefix lengths (default: 0..max trace length)")->delimiter(',');
  prefix_cmd->add_option("--samples", samples_per_point, "samples per question per length");
  prefix_cmd->add_option("--temperature", temperature, "sampling temperature");
  prefix_cmd->add_option("--max-gen-len", max_gen_len, "generation budget");
  prefix_cmd->add_option("--seed", seed, "sampling seed");
  prefix_cmd->add_option("--out", out_path, "JSON result file");

  CLI::App* var_cmd = app.add_subcommand(
      "probe-variance", "Gradient-norm variance, grpo_rpo vs grpo, matched seeds");
  var_cmd->add_option("--config", config_path, "base config file")->required();
  var_cmd->add_option("--steps", steps, "matched steps per mode");
  var_cmd->add_option("--lr", probe_lr, "learning rate during the probe (default 0: frozen policy)");
  var_cmd->add_option("--out", out_path, "JSON result file");

  CLI::App* mse_cmd = app.add_subcommand(
      "probe-mse", "Gradient-estimator MSE vs shaping alpha");
  mse_cmd->add_option("--config", config_path, "base config file")->required();
  mse_cmd->add_option("--alphas", alphas_csv, "alpha grid")->delimiter(',');
  mse_cmd->add_option("--ref-samples", ref_samples, "full-information samples for the reference gradient");
  mse_cmd->add_option("--trials", trials, "single-group estimates per alpha");
  mse_cmd->add_option("--out", out_path, "JSON result file");

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Grid sweep over sweep.L / sweep.alpha / sweep.epsilon");
  sweep_cmd->add_option("--config", config_path, "base config with sweep.* lists")->required();
  sweep_cmd->add_option("--out", out_path, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(init_cache_cmd)) {
      rpo::Config cfg = rpo::Config::parse_file(config_path);
      rpo::run_init_cache(cfg, out_path, opt_str(checkpoint_path));
      std::cout << "cache written to " << out_path << "\n";
    } else if (app.got_subcommand(train_cmd)) {
      rpo::Config cfg = rpo::Config::parse_file(config_path);
      rpo::TrainRunResult r =
          rpo::run_train(cfg, out_path, opt_str(cache_path));
      std::cout << "steps " << r.steps << ", final train accuracy "
                << r.final_accuracy << ", mean decode tokens/sample "
                << r.mean_decode_tokens << "\n"
                << "metrics: " << r.metrics_path << "\n"
                << "checkpoint: " << r.checkpoint_path << "\n";
      if (!r.cache_path.empty()) std::cout << "cache: " << r.cache_path << "\n";
    } else if (app.got_subcommand(eval_cmd)) {
      rpo::NgramPolicy policy = rpo::NgramPolicy::load(checkpoint_path);
      std::vector<rpo::TaskInstance> dataset = rpo::load_dataset(dataset_path);
      rpo::EvalReport report = rpo::evaluate(policy, dataset, n_samples,
                                             temperature, max_gen_len, seed);
      report.dataset_id = dataset_path;
      std::string path = out_path.empty() ? "eval_report.txt" : out_path;
      rpo::save_eval_report(report, path);
      std::cout << "accuracy " << report.accuracy << ", pass@" << n_samples
                << " " << report.pass_at.back() << ", mean length "
                << report.mean_length << "\n"
                << "report: " << path << "\n";
    } else if (app.got_subcommand(prefix_cmd)) {
      rpo::NgramPolicy policy = rpo::NgramPolicy::load(checkpoint_path);
      std::vector<rpo::TaskInstance> dataset = rpo::load_dataset(dataset_path);
      std::vector<int> lengths;
      if (lengths_csv.empty()) {
        int mx = 0;
        for (const rpo::TaskInstance& inst : dataset) {
          mx = std::max(mx, rpo::reference_trace(inst).total_len());
        }
        for (int l = 0; l <= mx; ++l) lengths.push_back(l);
      } else {
        for (const std::string& s : lengths_csv) lengths.push_back(std::stoi(s));
      }
      rpo::PrefixProbeResult r =
          rpo::probe_prefix(policy, dataset, lengths, samples_per_point,
                            temperature, max_gen_len, seed);
      for (const rpo::PrefixProbePoint& p : r.points) {
        std::cout << "prefix_len " << p.prefix_len << "  accuracy "
                  << p.accuracy << (p.clamped ? "  (clamped)" : "") << "\n";
      }
      std::cout << "spearman rho " << r.spearman_rho << ", one-sided p "
                << r.p_value << "\n";
      if (!out_path.empty()) {
        ordered_json j;
        j["points"] = ordered_json::array();
        for (const rpo::PrefixProbePoint& p : r.points) {
          j["points"].push_back({{"prefix_len", p.prefix_len},
                                 {"accuracy", p.accuracy},
                                 {"clamped", p.clamped}});
        }
        j["spearman_rho"] = r.spearman_rho;
        j["p_value"] = r.p_value;
        write_json(j, out_path);
      }
    } else if (app.got_subcommand(var_cmd)) {
      rpo::Config cfg = rpo::Config::parse_file(config_path);
      rpo::VarianceProbeResult r = rpo::probe_variance(cfg, steps, probe_lr);
      std::cout << "var(grad norm) grpo_rpo " << r.var_rpo << ", grpo "
                << r.var_full << ", ratio " << r.ratio << " (95% CI ["
                << r.ci.lo << ", " << r.ci.hi << "])\n";
      if (!out_path.empty()) {
        ordered_json j;
        j["steps"] = steps;
        j["var_rpo"] = r.var_rpo;
        j["var_full"] = r.var_full;
        j["ratio"] = r.ratio;
        j["ci_lo"] = r.ci.lo;
        j["ci_hi"] = r.ci.hi;
        j["grad_norms_rpo"] = r.grad_norms_rpo;
        j["grad_norms_full"] = r.grad_norms_full;
        write_json(j, out_path);
      }
    } else if (app.got_subcommand(mse_cmd)) {
      rpo::Config cfg = rpo::Config::parse_file(config_path);
      std::vector<double> alphas = parse_doubles(alphas_csv);
      rpo::MseProbeResult r = rpo::probe_mse(cfg, alphas, ref_samples, trials);
      for (const rpo::MseProbeRow& row : r.rows) {
        std::cout << "alpha " << row.alpha << "  mse " << row.mse << "\n";
      }
      std::cout << "reference half-sample diff " << r.reference_half_diff
                << "\n";
      if (!out_path.empty()) {
        ordered_json j;
        j["rows"] = ordered_json::array();
        for (const rpo::MseProbeRow& row : r.rows) {
          j["rows"].push_back({{"alpha", row.alpha}, {"mse", row.mse}});
        }
        j["reference_half_diff"] = r.reference_half_diff;
        write_json(j, out_path);
      }
    } else if (app.got_subcommand(sweep_cmd)) {
      rpo::Config cfg = rpo::Config::parse_file(config_path);
      std::vector<rpo::SweepRow> rows = rpo::run_sweep(cfg, out_path);
      int failures = 0;
      for (const rpo::SweepRow& row : rows) {
        if (!row.ok) ++failures;
        std::cout << "cell " << row.cell << " [" << row.params << "] "
                  << (row.ok ? "accuracy " + std::to_string(row.final_accuracy)
                             : row.error)
                  << "\n";
      }
      std::cout << rows.size() << " cells, " << failures << " failed; table: "
                << out_path << "/sweep.tsv\n";
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
