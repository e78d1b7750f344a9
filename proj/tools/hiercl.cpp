/*
 * Copyright 2026 The HierCL Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// hiercl: hierarchical-contrastive-learning toolkit CLI.
//
// Subcommands: train, grad-check, ab-balance, loss-eval, iou, ap,
// prototypes dump|load. The HIERCL_SEED environment variable overrides the
// config seed for train / ab-balance / grad-check.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hiercl/hiercl.hpp"

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("HIERCL_SEED");
  if (!s || !*s) return std::nullopt;
  return std::strtoull(s, nullptr, 10);
}

hiercl::SyntheticConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hiercl::Error("cannot open config file: " + path);
  json j;
  in >> j;
  hiercl::SyntheticConfig cfg = hiercl::SyntheticConfig::from_json(j);
  if (const auto seed = env_seed()) cfg.seed = *seed;
  return cfg;
}

hiercl::RotatedBox parse_box(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) v.push_back(std::stod(tok));
  if (v.size() != 5)
    throw hiercl::Error("box must be given as cx,cy,w,h,deg: " + text);
  return hiercl::RotatedBox(v[0], v[1], v[2], v[3], v[4] * hiercl::kPi / 180.0);
}

bool loss_trends_down(const std::vector<double>& trace) {
  if (trace.size() < 20) return true;
  double early = 0.0, late = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    early += trace[k];
    late += trace[trace.size() - 1 - k];
  }
  return late <= early;
}

json report_to_json(const hiercl::TrainReport& r, const hiercl::SyntheticConfig& cfg) {
  json out;
  out["type"] = "summary";
  out["loss"] = hiercl::to_string(cfg.loss);
  out["seed"] = cfg.seed;
  out["steps"] = cfg.steps;
  out["loss_trend_down"] = loss_trends_down(r.loss_trace);
  out["head_mass"] = r.head_mass;
  out["leaf_accuracy"] = r.leaf_accuracy;
  out["head_accuracy"] = r.head_accuracy;
  out["tail_accuracy"] = r.tail_accuracy;
  out["final_loss"] = r.loss_trace.empty() ? 0.0 : r.loss_trace.back();
  out["clustering"] = r.clustering.to_json();
  out["terms"] = {{"bhcl", r.final_terms.bhcl},
                  {"cls", r.final_terms.cls},
                  {"iou", r.final_terms.iou},
                  {"l1", r.final_terms.l1}};
  out["total_loss"] = r.final_total;
  json per_class = json::object();
  for (const auto& [name, acc] : r.per_class_accuracy) per_class[name] = acc;
  out["per_class_accuracy"] = per_class;
  return out;
}

void print_summary(const hiercl::TrainReport& r, const hiercl::SyntheticConfig& cfg) {
  std::cout << "loss " << hiercl::to_string(cfg.loss) << ", seed " << cfg.seed
            << ", steps " << cfg.steps << "\n";
  std::cout << "head mass (top-" << cfg.head_classes << "): " << fmt(r.head_mass) << "\n";
  if (!r.loss_trace.empty())
    std::cout << "loss: first " << fmt(r.loss_trace.front()) << " -> last "
              << fmt(r.loss_trace.back()) << " (trend "
              << (loss_trends_down(r.loss_trace) ? "down" : "NOT down") << ")\n";
  std::cout << "held-out leaf accuracy: " << fmt(r.leaf_accuracy)
            << " (head " << fmt(r.head_accuracy) << ", tail " << fmt(r.tail_accuracy)
            << ")\n";
  for (const auto& s : r.clustering.levels)
    std::cout << "level " << s.level << ": intra " << fmt(s.intra) << ", inter-sibling "
              << fmt(s.inter_sibling) << ", inter-cross " << fmt(s.inter_cross)
              << ", proto-acc " << fmt(s.proto_accuracy) << "\n";
  std::cout << "terms: bhcl " << fmt(r.final_terms.bhcl) << ", cls "
            << fmt(r.final_terms.cls) << ", iou " << fmt(r.final_terms.iou) << ", l1 "
            << fmt(r.final_terms.l1) << " -> total " << fmt(r.final_total) << "\n";
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  const hiercl::SyntheticConfig cfg = load_config(config_path);
  const hiercl::TrainReport report = hiercl::train_embeddings(cfg);
  print_summary(report, cfg);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream jsonl(out_dir + "/report.jsonl");
    for (std::size_t step = 0; step < report.loss_trace.size(); ++step)
      jsonl << json{{"type", "step"}, {"step", step}, {"loss", report.loss_trace[step]}}
            << "\n";
    jsonl << report_to_json(report, cfg) << "\n";
    hiercl::save_bank(report.bank, report.tree, out_dir + "/bank.json");

    // Final embeddings in the loss-eval batch format, with the trained
    // bank inlined so `loss-eval --batch <out>/embeddings.json` works.
    json batch;
    batch["hierarchy"] = report.tree.to_json();
    batch["tau"] = cfg.weights.tau;
    batch["epsilon"] = cfg.weights.epsilon;
    batch["prototype_bank"] = hiercl::bank_to_json(report.bank, report.tree);
    batch["rows"] = json::array();
    for (std::size_t i = 0; i < report.final_vectors.rows(); ++i) {
      if (report.final_labels[i].empty()) continue;  // no annotatable terminal
      const auto row = report.final_vectors.row(i);
      batch["rows"].push_back(
          {{"label", report.tree.node(report.final_labels[i].terminal()).name},
           {"vector", std::vector<double>(row.begin(), row.end())}});
    }
    std::ofstream(out_dir + "/embeddings.json") << batch.dump() << "\n";
    std::cout << "wrote " << out_dir << "/report.jsonl, bank.json, embeddings.json\n";
  }
  return 0;
}

int cmd_grad_check(std::uint64_t seed, std::size_t trials, double tolerance) {
  if (const auto s = env_seed()) seed = *s;
  const hiercl::GradCheckResult res = hiercl::run_gradient_checks(seed, trials, tolerance);
  std::cout << "trials: " << res.trials << "\n";
  std::cout << "worst relative error, balanced loss: " << res.worst_bhcl << "\n";
  std::cout << "worst relative error, hierarchical loss: " << res.worst_hcl << "\n";
  std::cout << (res.failures == 0 ? "PASS" : "FAIL") << " (tolerance " << tolerance
            << ", failures " << res.failures << ")\n";
  return res.failures == 0 ? 0 : 1;
}

int cmd_ab_balance(const std::string& config_path, const std::string& seeds_csv,
                   const std::string& out_path) {
  hiercl::SyntheticConfig base = load_config(config_path);
  std::vector<std::uint64_t> seeds;
  {
    std::stringstream ss(seeds_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) seeds.push_back(std::strtoull(tok.c_str(), nullptr, 10));
  }
  if (seeds.empty()) throw hiercl::Error("ab-balance: no seeds given");

  std::ofstream jsonl;
  if (!out_path.empty()) jsonl.open(out_path);

  std::size_t bhcl_wins = 0, ema_wins = 0;
  for (const std::uint64_t seed : seeds) {
    auto run = [&](hiercl::LossKind kind) {
      hiercl::SyntheticConfig cfg = base;
      cfg.seed = seed;
      cfg.loss = kind;
      return hiercl::train_embeddings(cfg);
    };
    const hiercl::TrainReport bhcl = run(hiercl::LossKind::bhcl);
    const hiercl::TrainReport hcl = run(hiercl::LossKind::hcl);
    const hiercl::TrainReport none = run(hiercl::LossKind::bhcl_no_prototypes);

    const bool win_bh = bhcl.tail_accuracy > hcl.tail_accuracy;
    const bool win_ema = bhcl.tail_accuracy > none.tail_accuracy;
    bhcl_wins += win_bh;
    ema_wins += win_ema;
    std::cout << "seed " << seed << ": tail acc bhcl " << fmt(bhcl.tail_accuracy)
              << " vs hcl " << fmt(hcl.tail_accuracy) << " vs no-proto "
              << fmt(none.tail_accuracy) << " | head acc bhcl "
              << fmt(bhcl.head_accuracy) << " vs hcl " << fmt(hcl.head_accuracy) << "\n";
    if (jsonl.is_open())
      jsonl << json{{"seed", seed},
                    {"bhcl_tail", bhcl.tail_accuracy},
                    {"hcl_tail", hcl.tail_accuracy},
                    {"noproto_tail", none.tail_accuracy},
                    {"bhcl_head", bhcl.head_accuracy},
                    {"hcl_head", hcl.head_accuracy},
                    {"head_mass", bhcl.head_mass}}
            << "\n";
  }
  std::cout << "balanced loss beats plain hierarchical loss on tail accuracy in "
            << bhcl_wins << "/" << seeds.size() << " seeds\n";
  std::cout << "EMA prototypes beat the no-prototype mode in " << ema_wins << "/"
            << seeds.size() << " seeds\n";
  return 0;
}

int cmd_loss_eval(const std::string& batch_path) {
  const hiercl::BatchFile bf = hiercl::load_batch_file(batch_path);
  hiercl::LossConfig cfg;
  cfg.tau = bf.tau;
  cfg.level_weights = hiercl::penalty_weights(bf.tree.depth());

  std::cout << "rows: " << bf.batch.size() << ", dim: " << bf.batch.dim()
            << ", tree depth: " << bf.tree.depth() << ", tau: " << bf.tau << "\n";
  if (bf.batch.size() >= 2)
    std::cout << "scl: " << fmt(hiercl::scl_loss(bf.batch, bf.tau)) << "\n";
  const hiercl::LevelBreakdown breakdown =
      hiercl::per_level_breakdown(bf.batch, bf.bank, bf.tree, cfg);
  for (std::size_t l = 0; l < breakdown.bhcl.size(); ++l) {
    std::cout << "level " << (l + 1) << ": weight " << fmt(cfg.level_weights[l])
              << ", hcl term " << fmt(breakdown.hcl[l]) << ", bhcl term "
              << fmt(breakdown.bhcl[l]) << "\n";
  }
  std::cout << "hcl total: " << fmt(breakdown.hcl_total) << "\n";
  std::cout << "bhcl total: " << fmt(breakdown.bhcl_total) << "\n";
  return 0;
}

int cmd_iou(const std::string& a_spec, const std::string& b_spec) {
  const hiercl::RotatedBox a = parse_box(a_spec);
  const hiercl::RotatedBox b = parse_box(b_spec);
  std::cout << fmt(hiercl::rotated_iou(a, b)) << "\n";
  return 0;
}

int cmd_ap(const std::string& dets_path, const std::string& gts_path) {
  const auto dets = hiercl::load_detections(dets_path);
  const auto gts = hiercl::load_ground_truth(gts_path);
  const hiercl::ApRange range = hiercl::ap_range(dets, gts);
  std::cout << "AP50 " << fmt(range.ap50) << "\n";
  std::cout << "AP75 " << fmt(range.ap75) << "\n";
  std::cout << "AP50:95 " << fmt(range.ap50_95) << "\n";
  const hiercl::ApResult at50 = hiercl::average_precision(dets, gts, 0.5);
  for (const auto& [cls, ap] : at50.per_class)
    std::cout << "class " << cls << " AP50 " << fmt(ap) << "\n";
  return 0;
}

int cmd_prototypes_dump(const std::string& hierarchy_path, std::size_t dim,
                        std::uint64_t seed, double epsilon, const std::string& out) {
  const hiercl::LabelTree tree = hiercl::LabelTree::load(hierarchy_path);
  const hiercl::PrototypeBank bank = hiercl::init_bank(tree, dim, seed, epsilon);
  hiercl::save_bank(bank, tree, out);
  std::cout << "wrote " << out << " (" << bank.size() << " prototypes, dim "
            << bank.dim() << ")\n";
  return 0;
}

int cmd_prototypes_load(const std::string& hierarchy_path, const std::string& in) {
  const hiercl::LabelTree tree = hiercl::LabelTree::load(hierarchy_path);
  const hiercl::PrototypeBank bank = hiercl::load_bank(in, tree);
  double worst = 0.0;
  for (int id = 1; id <= tree.category_count(); ++id)
    worst = std::max(worst, std::abs(hiercl::norm(bank.prototype(id)) - 1.0));
  std::cout << "prototypes: " << bank.size() << ", dim: " << bank.dim()
            << ", epsilon: " << bank.epsilon() << "\n";
  std::cout << "worst unit-norm deviation: " << worst << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical contrastive learning toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, batch_path, a_spec, b_spec;
  std::string dets_path, gts_path, seeds_csv = "1,2,3,4,5", ab_out;
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  double tolerance = 1e-5;
  std::string hierarchy_path, bank_path;
  std::size_t dim = 16;
  double epsilon = 0.1;

  auto* train = app.add_subcommand("train", "run a synthetic embedding training loop");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--out", out_dir, "directory for report.jsonl and bank.json");

  auto* grad = app.add_subcommand("grad-check", "verify analytic gradients against finite differences");
  grad->add_option("--seed", seed, "random seed");
  grad->add_option("--trials", trials, "number of random batches");
  grad->add_option("--tolerance", tolerance, "relative error tolerance");

  auto* ab = app.add_subcommand("ab-balance", "paired A/B runs: balanced vs plain loss, EMA vs no prototypes");
  ab->add_option("--config", config_path, "JSON config file")->required();
  ab->add_option("--seeds", seeds_csv, "comma-separated seeds");
  ab->add_option("--out", ab_out, "JSONL output path");

  auto* loss_eval = app.add_subcommand("loss-eval", "print per-level loss terms for a batch file");
  loss_eval->add_option("--batch", batch_path, "embedding batch JSON file")->required();

  auto* iou = app.add_subcommand("iou", "rotated IoU of two boxes");
  iou->add_option("--a", a_spec, "cx,cy,w,h,deg")->required();
  iou->add_option("--b", b_spec, "cx,cy,w,h,deg")->required();

  auto* ap = app.add_subcommand("ap", "rotated COCO-style average precision");
  ap->add_option("--dets", dets_path, "detections file")->required();
  ap->add_option("--gts", gts_path, "ground-truth file")->required();

  auto* protos = app.add_subcommand("prototypes", "prototype bank files");
  protos->require_subcommand(1);
  auto* dump = protos->add_subcommand("dump", "initialize a bank and write it");
  dump->add_option("--hierarchy", hierarchy_path, "hierarchy JSON file")->required();
  dump->add_option("--dim", dim, "embedding dimension");
  dump->add_option("--seed", seed, "random seed");
  dump->add_option("--epsilon", epsilon, "momentum control");
  dump->add_option("--out", bank_path, "output bank file")->required();
  auto* load = protos->add_subcommand("load", "read a bank file and print its header");
  load->add_option("--hierarchy", hierarchy_path, "hierarchy JSON file")->required();
  load->add_option("--in", bank_path, "bank file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, out_dir);
    if (*grad) return cmd_grad_check(seed, trials, tolerance);
    if (*ab) return cmd_ab_balance(config_path, seeds_csv, ab_out);
    if (*loss_eval) return cmd_loss_eval(batch_path);
    if (*iou) return cmd_iou(a_spec, b_spec);
    if (*ap) return cmd_ap(dets_path, gts_path);
    if (*dump) return cmd_prototypes_dump(hierarchy_path, dim, seed, epsilon, bank_path);
    if (*load) return cmd_prototypes_load(hierarchy_path, bank_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
