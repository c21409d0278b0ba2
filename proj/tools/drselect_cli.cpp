// Copyright 2026 the drselect authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// drselect: predicts which dense retriever will do best on an unlabeled
// target corpus and scores those predictions against nDCG ground truth.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drselect/drselect.hpp"

namespace {

struct Args {
  std::string config;
  std::string model;
  std::string dataset;
  std::size_t k = 0;
  std::string sim;
  std::vector<double> p;
  std::uint64_t seed = 0;
  int trials = 0;
  std::string method;
  std::string metric;
  std::string input;
  std::string output;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot dense retriever selection toolkit"};
  app.require_subcommand(1);
  Args a;

  auto with_config = [&](CLI::App* sub) { sub->add_option("-c,--config", a.config, "Pipeline config (JSON)")->required(); };

  auto* run = app.add_subcommand("run", "Run every stage: ingest, retrieve, perturb, select, truth, evaluate, report");
  with_config(run);
  auto* ingest = app.add_subcommand("ingest", "Validate inputs and draw the source sample");
  with_config(ingest);

  auto* retrieve = app.add_subcommand("retrieve", "Exact top-k retrieval into TREC run files");
  with_config(retrieve);
  retrieve->add_option("--model", a.model, "Only this model");
  retrieve->add_option("--dataset", a.dataset, "Only this dataset");
  retrieve->add_option("--k", a.k, "Run depth (default: retrieval_depth from the config)");
  retrieve->add_option("--sim", a.sim, "Override the model's similarity (dot|cosine)");

  auto* perturb = app.add_subcommand("perturb", "Write masked query TSVs");
  perturb->add_option("-c,--config", a.config, "Pipeline config (JSON)");
  auto* p_opt = perturb->add_option("--p", a.p, "Mask proportion(s)");
  auto* seed_opt = perturb->add_option("--seed", a.seed, "Masking seed");
  auto* trials_opt = perturb->add_option("--trials", a.trials, "Masked copies per query");
  perturb->add_option("--input", a.input, "Query TSV to perturb (standalone mode)");
  perturb->add_option("--output", a.output, "Output TSV (standalone mode)");

  auto* select = app.add_subcommand("select", "Compute method score tables");
  with_config(select);
  select->add_option("--method", a.method, "Method name (e.g. entropy) or label (e.g. entropy@10)");

  auto* truth = app.add_subcommand("truth", "Ground-truth effectiveness from runs and qrels");
  with_config(truth);
  truth->add_option("--metric", a.metric, "Metric, e.g. ndcg@10");

  auto* evaluate = app.add_subcommand("evaluate", "Kendall tau and regret per method and dataset");
  with_config(evaluate);
  auto* report = app.add_subcommand("report", "Markdown report from the evaluation");
  with_config(report);

  CLI11_PARSE(app, argc, argv);

  try {
    drselect::StageOptions opt;
    opt.threads = drselect::thread_count_from_env();
    if (!a.model.empty()) opt.model = a.model;
    if (!a.dataset.empty()) opt.dataset = a.dataset;
    if (a.k > 0) opt.k = a.k;
    if (!a.sim.empty()) opt.sim = drselect::parse_similarity(a.sim);
    if (p_opt->count() > 0) opt.p = a.p;
    if (seed_opt->count() > 0) opt.seed = a.seed;
    if (trials_opt->count() > 0) opt.trials = a.trials;
    if (!a.method.empty()) opt.method = a.method;
    if (!a.metric.empty()) opt.metric = a.metric;

    if (perturb->parsed() && !a.input.empty()) {
      if (a.output.empty() || a.p.size() != 1) {
        throw drselect::config_error("standalone perturb needs --input, --output and exactly one --p");
      }
      drselect::PerturbConfig pc;
      pc.p = a.p.front();
      pc.seed = a.seed;
      pc.trials = trials_opt->count() > 0 ? a.trials : 1;
      if (seed_opt->count() == 0) throw drselect::config_error("standalone perturb needs an explicit --seed");
      drselect::perturb_file(a.input, a.output, pc);
      return 0;
    }
    if (a.config.empty()) throw drselect::config_error("--config is required");

    const auto config = drselect::load_config(a.config);
    if (run->parsed()) drselect::run_pipeline(config, opt);
    if (ingest->parsed()) drselect::stage_ingest(config, opt);
    if (retrieve->parsed()) drselect::stage_retrieve(config, opt);
    if (perturb->parsed()) drselect::stage_perturb(config, opt);
    if (select->parsed()) drselect::stage_select(config, opt);
    if (truth->parsed()) drselect::stage_truth(config, opt);
    if (evaluate->parsed()) drselect::stage_evaluate(config, opt);
    if (report->parsed()) drselect::stage_report(config, opt);
  } catch (const drselect::Error& e) {
    std::cerr << "drselect: " << e.what() << "\n";
    return drselect::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "drselect: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
