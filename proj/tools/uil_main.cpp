#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uil/checks.hpp"
#include "uil/graphon.hpp"
#include "uil/harness.hpp"
#include "uil/synthgen.hpp"

namespace {

int cmd_gen(const std::string& mode, uil::GeneratorConfig cfg, const std::string& out_dir) {
  if (mode == "synb") {
    cfg.motifs_min = cfg.motifs_max = 1;
  } else if (mode == "syn5") {
    cfg.motifs_min = 1;
    cfg.motifs_max = 5;
  } else {
    std::fprintf(stderr, "unknown --mode '%s' (expected synb or syn5)\n", mode.c_str());
    return 1;
  }
  uil::validate_config(cfg);
  std::filesystem::create_directories(out_dir);
  auto [train_ds, test_ds] = uil::synthesize(cfg);
  uil::write_jsonl(train_ds, out_dir + "/train.jsonl");
  uil::write_jsonl(test_ds, out_dir + "/test.jsonl");
  uil::write_gen_manifest(cfg, out_dir + "/gen-manifest.json");
  std::printf("wrote %zu train / %zu test graphs to %s\n", train_ds.graphs.size(),
              test_ds.graphs.size(), out_dir.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& out_dir) {
  uil::RunConfig rc = config_path.empty() ? uil::run_config_from_overrides(sets)
                                          : uil::parse_run_config(config_path, sets);
  uil::run_experiment(rc, out_dir);
  std::printf("wrote %s/report.json\n", out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path, bool clamp) {
  uil::Checkpoint ck = uil::load_checkpoint(ckpt_path);
  uil::Dataset ds = uil::read_jsonl(data_path);
  double acc = uil::evaluate_accuracy(ck.params, ds, clamp);
  std::printf("accuracy %.4f over %zu graphs\n", acc, ds.graphs.size());
  bool flags = !ds.graphs.empty();
  for (const uil::Graph& g : ds.graphs)
    if (!g.has_stable_flags()) flags = false;
  if (!clamp && flags) std::printf("mask_auc %.4f\n", uil::mask_auc(ck.params, ds));
  return 0;
}

int cmd_graphon(const std::string& data_path, const std::string& by, int n,
                const std::string& mode_str, const std::string& out_dir) {
  bool by_label = false, by_env = false;
  std::stringstream ss(by);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part == "label") by_label = true;
    else if (part == "env") by_env = true;
    else if (!part.empty()) {
      std::fprintf(stderr, "unknown --by key '%s' (expected label and/or env)\n", part.c_str());
      return 1;
    }
  }
  if (!by_label && !by_env) {
    std::fprintf(stderr, "--by needs at least one of label, env\n");
    return 1;
  }
  uil::CutDistanceMode mode;
  if (mode_str == "exact") mode = uil::CutDistanceMode::exact;
  else if (mode_str == "anneal") mode = uil::CutDistanceMode::anneal;
  else {
    std::fprintf(stderr, "unknown --mode '%s' (expected exact or anneal)\n", mode_str.c_str());
    return 1;
  }
  if (mode == uil::CutDistanceMode::exact && n > 8) {
    std::fprintf(stderr, "exact mode is limited to --n 8; use --mode anneal\n");
    return 1;
  }

  uil::Dataset ds = uil::read_jsonl(data_path);
  std::map<std::string, std::pair<std::vector<uil::Mat>, std::vector<uil::Mat>>> groups;
  for (const uil::Graph& g : ds.graphs) {
    std::string key;
    if (by_label) key += "y" + std::to_string(g.label);
    if (by_env) {
      if (!g.env.has_value()) {
        std::fprintf(stderr, "graph %d lacks an environment tag\n", g.id);
        return 1;
      }
      key += (key.empty() ? "" : "_") + std::string("e") + std::to_string(*g.env);
    }
    groups[key].first.push_back(g.adjacency);
    groups[key].second.push_back(g.adjacency);
  }

  std::map<std::string, uil::StepFunction> graphons;
  for (auto& [key, cell] : groups) {
    graphons[key] = uil::estimate_group_graphon(cell.first, cell.second, n);
    std::printf("group %-10s %5zu graphs\n", key.c_str(), cell.first.size());
  }
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (auto& [key, w] : graphons) {
      std::ofstream csv(out_dir + "/graphon_" + key + ".csv");
      for (int i = 0; i < w.resolution; ++i) {
        for (int j = 0; j < w.resolution; ++j) csv << (j ? "," : "") << w.values(i, j);
        csv << "\n";
      }
    }
    std::printf("wrote %zu graphon CSVs to %s\n", graphons.size(), out_dir.c_str());
  }

  std::printf("pairwise cut distances (%s, %d blocks):\n", mode_str.c_str(), n);
  std::printf("%-10s", "");
  for (auto& [key, w] : graphons) std::printf(" %9s", key.c_str());
  std::printf("\n");
  for (auto& [k1, w1] : graphons) {
    std::printf("%-10s", k1.c_str());
    for (auto& [k2, w2] : graphons) std::printf(" %9.5f", uil::cut_distance(w1, w2, mode));
    std::printf("\n");
  }
  return 0;
}

int cmd_check() {
  int failures = 0;
  for (const uil::CheckResult& r : uil::run_property_suite()) {
    std::printf("%s %-24s %s (%.1fs)\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.detail.c_str(), r.seconds);
    if (!r.pass) ++failures;
  }
  std::printf("%d of 7 checks failed\n", failures);
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Invariant graph learning laboratory"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_mode = "synb", gen_out;
  uil::GeneratorConfig gc;
  gen->add_option("--mode", gen_mode, "synb (one motif) or syn5 (1-5 motifs)");
  gen->add_option("--bias", gc.bias, "label/base-family correlation in the training split");
  gen->add_option("--p-train", gc.bernoulli_p_train, "training-split noise probability");
  gen->add_option("--p-test", gc.bernoulli_p_test, "test-split noise probability");
  gen->add_option("--seed", gc.seed, "generator seed");
  gen->add_option("--train", gc.num_train, "training graphs");
  gen->add_option("--test", gc.num_test, "test graphs");
  gen->add_option("--classes", gc.num_classes, "number of classes (motifs)");
  gen->add_option("--out", gen_out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train one configuration and write reports");
  std::string train_config, train_out;
  std::vector<std::string> train_sets;
  train->add_option("--config", train_config, "flat key = value config file");
  train->add_option("--set", train_sets, "override, key=value (repeatable)");
  train->add_option("--out", train_out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_ckpt, eval_data;
  bool eval_clamp = false;
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--data", eval_data, "JSONL dataset")->required();
  eval->add_flag("--clamp", eval_clamp, "bypass the mask networks (plain-encoder path)");

  auto* graphon = app.add_subcommand("graphon", "estimate group graphons and their distances");
  std::string gr_data, gr_by = "label,env", gr_mode = "exact", gr_out;
  int gr_n = 6;
  graphon->add_option("--data", gr_data, "JSONL dataset")->required();
  graphon->add_option("--by", gr_by, "grouping keys: label, env, or label,env");
  graphon->add_option("--n", gr_n, "step-function resolution");
  graphon->add_option("--mode", gr_mode, "cut-distance mode: exact or anneal");
  graphon->add_option("--out", gr_out, "directory for graphon CSVs");

  auto* check = app.add_subcommand("check", "run the property suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(gen)) return cmd_gen(gen_mode, gc, gen_out);
    if (app.got_subcommand(train)) return cmd_train(train_config, train_sets, train_out);
    if (app.got_subcommand(eval)) return cmd_eval(eval_ckpt, eval_data, eval_clamp);
    if (app.got_subcommand(graphon)) return cmd_graphon(gr_data, gr_by, gr_n, gr_mode, gr_out);
    if (app.got_subcommand(check)) return cmd_check();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
