#pragma once

#include <chrono>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "repgn/errors.hpp"
#include "repgn/gcpool.hpp"
#include "repgn/graph.hpp"
#include "repgn/io.hpp"
#include "repgn/oracle.hpp"
#include "repgn/repgn.hpp"
#include "repgn/spectral.hpp"
#include "repgn/synthetic.hpp"

namespace repgn::cli {

enum ExitCode : int { ok = 0, input_error = 1, numerical_error = 2 };

namespace detail {

using io::Json;

/// Flags shared by every command that accepts --config. Values given on the
/// command line win over the config file.
struct ConfigFlags {
  std::string config_path;
  std::optional<double> iou_thr, stop_ncut, lambda, epsilon;
  std::optional<int> min_size, min_part, head_count, layers;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> norm_mode;
  bool dense = false;
  bool iou_bias = false;

  void attach(CLI::App *cmd, bool config_required) {
    auto *opt = cmd->add_option("--config", config_path, "JSON configuration file");
    if (config_required)
      opt->required();
    cmd->add_option("--iou-thr", iou_thr, "edge threshold, IoU must exceed it");
    cmd->add_option("--min-size", min_size, "smallest component/part kept by GCPool");
    cmd->add_option("--stop-ncut", stop_ncut, "largest N_cut accepted for a split");
    cmd->add_option("--min-part", min_part, "smallest side of an accepted split");
    cmd->add_option("--lambda", lambda, "weight of the relational branch");
    cmd->add_option("--epsilon", epsilon, "normalization stabilizer");
    cmd->add_option("--heads", head_count, "attention heads per layer");
    cmd->add_option("--layers", layers, "stacked attention layers");
    cmd->add_option("--norm-mode", norm_mode, "literal | moment_match");
    cmd->add_option("--seed", seed, "seed for default parameter initialization");
    cmd->add_option("--threads", threads, "worker threads");
    cmd->add_flag("--dense-attention", dense, "attend over all pairs");
    cmd->add_flag("--iou-bias", iou_bias, "add log IoU to edge scores");
  }

  RepGNConfig resolve() const {
    RepGNConfig c;
    if (!config_path.empty())
      c = io::apply_config(c, io::read_json_file(config_path));
    Json o = Json::object();
    if (iou_thr) o["iou_thr"] = *iou_thr;
    if (stop_ncut) o["stop_ncut"] = *stop_ncut;
    if (lambda) o["lambda"] = *lambda;
    if (epsilon) o["epsilon"] = *epsilon;
    if (min_size) o["min_size"] = *min_size;
    if (min_part) o["min_part"] = *min_part;
    if (head_count) o["head_count"] = *head_count;
    if (layers) o["layers"] = *layers;
    if (seed) o["seed"] = *seed;
    if (threads) o["threads"] = *threads;
    if (norm_mode) o["norm_mode"] = *norm_mode;
    if (dense) o["dense_attention"] = true;
    if (iou_bias) o["iou_bias"] = true;
    c = io::apply_config(c, o);
    c.validate();
    return c;
  }
};

/// A graph JSON ({"nodes", "edges"}) or a proposal document, from which the
/// IoU graph is built.
inline ProposalGraph load_graph_input(const std::string &path, double iou_thr, unsigned threads) {
  const Json j = io::read_json_file(path);
  if (j.is_object() && j.contains("edges"))
    return io::graph_from_json(j);
  const auto doc = io::parse_proposals(j);
  return build_graph(doc.normalized_boxes(), doc.feature_matrix(), iou_thr, threads);
}

inline std::vector<AttentionParams> load_layers(const std::string &params_path, int dim, const RepGNConfig &cfg) {
  if (params_path.empty())
    return default_layers(dim, cfg);
  return io::params_from_json(io::read_json_file(params_path));
}

inline Json stage_json(const std::vector<std::pair<std::string, double>> &stages) {
  Json j = Json::object();
  for (const auto &[name, ms] : stages)
    j[name] = ms;
  return j;
}

inline void write_report(const std::string &path, Json report) {
  if (!path.empty())
    io::write_atomic(path, io::to_text(report));
}

} // namespace detail

/// Parses and runs one command. args excludes the program name.
inline int run_command(const std::vector<std::string> &args, std::ostream &out = std::cout,
                       std::ostream &err = std::cerr) {
  using detail::Json;
  CLI::App app{"Relational proposal graph refinement", "repgn"};
  app.require_subcommand(1);

  // graph
  auto *graph = app.add_subcommand("graph", "proposal graph construction and components");
  graph->require_subcommand(1);
  struct {
    std::string input, output;
    double iou_thr = 0.3;
    int min_size = 3;
    unsigned threads = 1;
  } g_opts;
  auto *g_build = graph->add_subcommand("build", "IoU-thresholded proposal graph");
  g_build->add_option("--input", g_opts.input, "proposal document")->required();
  g_build->add_option("--iou-thr", g_opts.iou_thr, "edge threshold (strict)");
  g_build->add_option("--output", g_opts.output, "graph JSON")->required();
  g_build->add_option("--threads", g_opts.threads, "worker threads");
  auto *g_comp = graph->add_subcommand("components", "connected components and size filtering");
  g_comp->add_option("--input", g_opts.input, "graph JSON or proposal document")->required();
  g_comp->add_option("--min-size", g_opts.min_size, "smallest component kept");
  g_comp->add_option("--iou-thr", g_opts.iou_thr, "edge threshold when the input is a proposal document");

  // cut
  auto *cut = app.add_subcommand("cut", "normalized cut partitioning");
  cut->require_subcommand(1);
  struct {
    std::string input;
    double stop_ncut = 0.5;
    double iou_thr = 0.3;
    int min_part = 1;
    bool brute = false;
  } c_opts;
  auto *c_ncut = cut->add_subcommand("ncut", "recursive spectral N_cut, or the exhaustive optimum");
  c_ncut->add_option("--input", c_opts.input, "graph JSON or proposal document")->required();
  c_ncut->add_option("--stop-ncut", c_opts.stop_ncut, "largest N_cut accepted for a split");
  c_ncut->add_option("--min-part", c_opts.min_part, "smallest side of an accepted split");
  c_ncut->add_option("--iou-thr", c_opts.iou_thr, "edge threshold when the input is a proposal document");
  c_ncut->add_flag("--brute-force", c_opts.brute, "exhaustive minimum 2-way N_cut (M <= 15)");

  // pool
  auto *pool = app.add_subcommand("pool", "graph cut pooling");
  pool->require_subcommand(1);
  struct {
    std::string input, output, report;
    detail::ConfigFlags cfg;
  } p_opts;
  auto *p_gc = pool->add_subcommand("gcpool", "filter, cut and average-pool proposals");
  p_gc->add_option("--input", p_opts.input, "proposal document")->required();
  p_gc->add_option("--output", p_opts.output, "partition JSON")->required();
  p_gc->add_option("--report", p_opts.report, "run report JSON");
  p_opts.cfg.attach(p_gc, true);

  // attend / forward
  struct {
    std::string input, params, output, report;
    bool no_gcpool = false;
    detail::ConfigFlags cfg;
  } f_opts;
  auto *attend_cmd = app.add_subcommand("attend", "graph attention over the IoU graph");
  auto *forward_cmd = app.add_subcommand("forward", "full relational refinement pipeline");
  for (auto *cmd : {attend_cmd, forward_cmd}) {
    cmd->add_option("--input", f_opts.input, "proposal document")->required();
    cmd->add_option("--params", f_opts.params, "attention parameter JSON (default: seeded init)");
    cmd->add_option("--output", f_opts.output, "features JSON")->required();
    cmd->add_option("--report", f_opts.report, "run report JSON");
    f_opts.cfg.attach(cmd, true);
  }
  forward_cmd->add_flag("--no-gcpool", f_opts.no_gcpool, "skip the graph cut pooling branch");

  // oracle
  auto *oracle_cmd = app.add_subcommand("oracle", "self-checks against independent oracles");
  oracle_cmd->require_subcommand(1);
  struct {
    int max_n = 10;
    int trials = 100;
    std::uint64_t seed = 0;
  } o_opts;
  auto *o_ncut = oracle_cmd->add_subcommand("ncut", "spectral cut vs exhaustive optimum on bridged cliques");
  o_ncut->add_option("--max-n", o_opts.max_n, "largest graph size (>= 6)");
  auto *o_grad = oracle_cmd->add_subcommand("grad", "analytic attention gradients vs finite differences");
  for (auto *cmd : {o_ncut, o_grad}) {
    cmd->add_option("--trials", o_opts.trials, "number of random instances");
    cmd->add_option("--seed", o_opts.seed, "random seed");
  }

  // gen
  SceneSpec scene;
  std::string gen_output;
  auto *gen = app.add_subcommand("gen", "seeded synthetic proposal clusters");
  gen->add_option("--clusters", scene.clusters, "number of clusters")->required();
  gen->add_option("--per-cluster", scene.per_cluster, "proposals per cluster")->required();
  gen->add_option("--seed", scene.seed, "random seed")->required();
  gen->add_option("--output", gen_output, "proposal document")->required();
  gen->add_option("--dim", scene.dim, "feature dimension (0: no stored features)");
  gen->add_option("--jitter", scene.jitter, "corner noise as a fraction of the box size");
  gen->add_option("--width", scene.width, "image width in pixels");
  gen->add_option("--height", scene.height, "image height in pixels");

  // params
  struct {
    int dim = 7;
    std::string output;
    detail::ConfigFlags cfg;
  } pa_opts;
  auto *params_cmd = app.add_subcommand("params", "attention parameter files");
  params_cmd->require_subcommand(1);
  auto *pa_init = params_cmd->add_subcommand("init", "write seeded default parameters");
  pa_init->add_option("--dim", pa_opts.dim, "feature dimension");
  pa_init->add_option("--output", pa_opts.output, "parameter JSON")->required();
  pa_opts.cfg.attach(pa_init, false);

  std::vector<std::string> argv_store;
  argv_store.reserve(args.size() + 1);
  argv_store.emplace_back("repgn");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char *> argv;
  for (auto &a : argv_store)
    argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp &e) {
    app.exit(e, out, err);
    return ok;
  } catch (const CLI::ParseError &e) {
    err << "repgn: " << e.what() << "\n\n" << app.help();
    return input_error;
  }

  try {
    if (g_build->parsed()) {
      const auto doc = io::load_proposals(g_opts.input);
      const auto g = build_graph(doc.normalized_boxes(), doc.feature_matrix(), g_opts.iou_thr, g_opts.threads);
      io::write_atomic(g_opts.output, io::to_text(io::to_json(g)));
    } else if (g_comp->parsed()) {
      const auto g = detail::load_graph_input(g_opts.input, g_opts.iou_thr, 1);
      const auto cc = connected_components(g);
      const auto filtered = filter_components(g, g_opts.min_size);
      Json j;
      j["labels"] = cc.labels;
      j["component_sizes"] = cc.component_sizes;
      j["kept"] = filtered.graph.node_ids();
      j["removed"] = filtered.removed;
      out << io::to_text(j);
    } else if (c_ncut->parsed()) {
      const auto g = detail::load_graph_input(c_opts.input, c_opts.iou_thr, 1);
      Json j;
      if (c_opts.brute) {
        const auto best = brute_force_ncut(g);
        j["labels"] = best.partition.labels;
        j["ncut"] = best.report.ncut_value;
      } else {
        if (!(c_opts.stop_ncut > 0.0))
          throw InvalidInput("--stop-ncut must be > 0");
        const auto p = recursive_ncut(g, c_opts.stop_ncut, c_opts.min_part);
        j["labels"] = p.labels;
        try {
          j["ncut"] = ncut_value(g, p).ncut_value;
        } catch (const DegeneratePartition &) {
          j["ncut"] = nullptr;
        }
      }
      out << io::to_text(j);
    } else if (p_gc->parsed()) {
      const auto cfg = p_opts.cfg.resolve();
      const auto t0 = std::chrono::steady_clock::now();
      const auto doc = io::load_proposals(p_opts.input);
      const auto g = build_graph(doc.normalized_boxes(), doc.feature_matrix(), cfg.iou_thr, cfg.threads);
      const auto t1 = std::chrono::steady_clock::now();
      const auto pooled = gcpool(g, cfg.gcpool_config());
      const auto t2 = std::chrono::steady_clock::now();
      const std::string text = io::to_text(io::to_json(pooled.labeling, pooled.coarse));
      io::write_atomic(p_opts.output, text);
      Json report;
      report["command"] = "pool gcpool";
      report["config"] = io::to_json(cfg);
      report["proposals"] = g.node_count();
      report["edges"] = g.edges().size();
      report["components"] = pooled.component_count;
      report["parts"] = pooled.labeling.part_count;
      report["filtered"] = pooled.filtered.size();
      report["refiltered"] = pooled.refiltered.size();
      report["timing_ms"] = detail::stage_json(
          {{"graph", std::chrono::duration<double, std::milli>(t1 - t0).count()},
           {"gcpool", std::chrono::duration<double, std::milli>(t2 - t1).count()}});
      report["output_digest"] = io::digest(text);
      detail::write_report(p_opts.report, std::move(report));
    } else if (attend_cmd->parsed() || forward_cmd->parsed()) {
      const bool is_forward = forward_cmd->parsed();
      const auto cfg = f_opts.cfg.resolve();
      const auto doc = io::load_proposals(f_opts.input);
      const auto boxes = doc.normalized_boxes();
      const Eigen::MatrixXd features = doc.feature_matrix();
      const auto layers = detail::load_layers(f_opts.params, static_cast<int>(features.cols()), cfg);
      Json report;
      report["command"] = is_forward ? (f_opts.no_gcpool ? "forward --no-gcpool" : "forward") : "attend";
      report["config"] = io::to_json(cfg);
      report["proposals"] = doc.size();
      report["feature_dim"] = features.cols();
      std::vector<NodeId> ids;
      Eigen::MatrixXd result;
      if (is_forward) {
        const auto refined = f_opts.no_gcpool ? repgn_forward_no_gcpool(boxes, features, layers, cfg)
                                              : repgn_forward(boxes, features, layers, cfg);
        const auto &d = refined.diagnostics;
        report["edges"] = d.edge_count;
        report["components"] = d.component_count;
        report["parts"] = d.part_count;
        report["coarse_nodes"] = d.coarse_count;
        report["filtered"] = d.filtered.size();
        report["refiltered"] = d.refiltered.size();
        report["timing_ms"] = detail::stage_json(d.stage_ms);
        ids = refined.original_ids;
        result = refined.features;
      } else {
        const auto t0 = std::chrono::steady_clock::now();
        const auto g = build_graph(boxes, features, cfg.iou_thr, cfg.threads);
        const auto t1 = std::chrono::steady_clock::now();
        result = run_attention_layers(g, layers, cfg.attention_options());
        const auto t2 = std::chrono::steady_clock::now();
        report["edges"] = g.edges().size();
        report["timing_ms"] = detail::stage_json(
            {{"graph", std::chrono::duration<double, std::milli>(t1 - t0).count()},
             {"attention", std::chrono::duration<double, std::milli>(t2 - t1).count()}});
        ids = g.node_ids();
      }
      const std::string text = io::to_text(io::features_to_json(ids, result));
      io::write_atomic(f_opts.output, text);
      report["output_digest"] = io::digest(text);
      detail::write_report(f_opts.report, std::move(report));
    } else if (o_ncut->parsed()) {
      const auto s = oracle::run_ncut_oracle(o_opts.max_n, o_opts.trials, o_opts.seed);
      out << "oracle ncut: " << s.agreements << "/" << s.trials
          << " instances match the exhaustive optimum (max |dN_cut| = " << s.max_value_gap << ")\n";
      return s.agreements == s.trials ? ok : numerical_error;
    } else if (o_grad->parsed()) {
      const auto s = oracle::run_grad_oracle(o_opts.trials, o_opts.seed);
      out << "oracle grad: " << s.passed << "/" << s.trials
          << " instances within 1e-5 relative error (max = " << s.max_relative_error << ")\n";
      return s.passed == s.trials ? ok : numerical_error;
    } else if (gen->parsed()) {
      io::write_atomic(gen_output, io::to_text(io::to_json(generate_scene(scene))));
    } else if (pa_init->parsed()) {
      const auto cfg = pa_opts.cfg.resolve();
      io::write_atomic(pa_opts.output, io::to_text(io::to_json(default_layers(pa_opts.dim, cfg))));
    }
  } catch (const NumericalFailure &e) {
    err << "repgn: numerical failure: " << e.what() << '\n';
    return numerical_error;
  } catch (const InvalidInput &e) {
    err << "repgn: " << e.what() << '\n';
    return input_error;
  } catch (const std::filesystem::filesystem_error &e) {
    err << "repgn: " << e.what() << '\n';
    return input_error;
  }
  return ok;
}

} // namespace repgn::cli
