// loopvet command-line tool.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "loopvet/loopvet.hpp"

namespace fs = std::filesystem;
using namespace loopvet;

namespace {

struct GraphInput {
  std::string path;
  bool g2o = false;

  PoseGraph load() const {
    if (!g2o) return read_graph_file(path);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_g2o(in);
  }
};

void add_graph_input(CLI::App* cmd, GraphInput& in) {
  cmd->add_option("graph", in.path, "Pose graph file")->required()->check(CLI::ExistingFile);
  cmd->add_flag("--g2o", in.g2o, "Read the input as a g2o file");
}

struct ParamOptions {
  std::vector<double> params_deg;  // sigma, sigma_bar in degrees

  ModelParams make(const PoseGraph& g) const {
    double s = deg2rad(2.0);
    double sb = deg2rad(20.0);
    if (params_deg.size() == 2) {
      s = deg2rad(params_deg[0]);
      sb = deg2rad(params_deg[1]);
    }
    ModelParams p = ModelParams::from_graph(g, s, sb);
    p.validate();
    return p;
  }
};

void add_params(CLI::App* cmd, ParamOptions& p) {
  cmd->add_option("--params", p.params_deg, "sigma and sigma_bar in degrees (default 2 20)")->expected(2);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  return out;
}

std::vector<InferenceMethod> parse_methods(const std::string& list) {
  std::vector<InferenceMethod> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(parse_method(item));
  }
  if (out.empty()) throw std::invalid_argument("no methods given");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Loop-closure outlier classification from rotation cycle consistency"};
  app.require_subcommand(1);

  // mcb
  GraphInput mcb_in;
  auto* mcb = app.add_subcommand("mcb", "Print a minimum cycle basis: CYCLE <length> <z> <edge:dir>...");
  add_graph_input(mcb, mcb_in);

  // infer
  GraphInput inf_in;
  ParamOptions inf_params;
  std::string inf_method = "bp";
  AdmmOptions admm_opts;
  BpOptions bp_opts;
  std::size_t inf_max_iters = 0;
  double inf_tol = 0.0;
  std::string trace_path;
  std::size_t cap = kDefaultCycleCap;
  auto* inf = app.add_subcommand("infer", "Posterior inlier probabilities per loop closure");
  add_graph_input(inf, inf_in);
  add_params(inf, inf_params);
  inf->add_option("--method", inf_method, "bp, admm or exact")->check(CLI::IsMember({"bp", "admm", "exact"}));
  inf->add_option("--rho0", admm_opts.rho0, "Initial ADMM penalty");
  inf->add_option("--max-iters", inf_max_iters, "Iteration cap (default 200 for bp, 500 for admm)");
  inf->add_option("--tol", inf_tol, "Stopping tolerance (default 1e-6)");
  inf->add_option("--trace", trace_path, "Write the ADMM iteration,r,t,rho trace as CSV");
  inf->add_option("--cap", cap, "Maximum loop closures per cycle");

  // em
  GraphInput em_in;
  ParamOptions em_params;
  std::string em_method = "exact";
  EmConfig em_cfg;
  bool em_no_psi = false;
  bool em_psi = false;
  auto* em = app.add_subcommand("em", "Estimate sigma, sigma_bar and priors; prints the trace as CSV");
  add_graph_input(em, em_in);
  add_params(em, em_params);
  em->add_option("--method", em_method, "bp, admm or exact")->check(CLI::IsMember({"bp", "admm", "exact"}));
  em->add_option("--rounds", em_cfg.max_rounds, "Maximum EM rounds");
  em->add_flag("--freeze-priors", em_cfg.freeze_priors, "Keep the loop-closure priors fixed");
  auto* psi_flag = em->add_flag("--psi", em_psi, "Include the psi normaliser in the objective");
  em->add_flag("--no-psi", em_no_psi, "Leave the psi normaliser out (default)")->excludes(psi_flag);

  // synth
  SynthSpec sspec;
  std::string synth_out;
  std::vector<double> inlier_band{1.6, 2.4};
  std::vector<double> outlier_band{16.0, 24.0};
  std::string noise_mode = "band";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic two-map pose graph");
  synth->add_option("--m", sspec.m_lc, "Number of loop closures");
  synth->add_option("--outliers", sspec.num_outliers, "Number of corrupted loop closures");
  synth->add_option("--seed", sspec.seed, "Random seed");
  synth->add_option("--nodes-per-map", sspec.nodes_per_map, "Nodes per map");
  synth->add_option("--maps", sspec.num_maps, "Number of maps");
  synth->add_option("--inlier-band", inlier_band, "Inlier noise angle band in degrees")->expected(2);
  synth->add_option("--outlier-band", outlier_band, "Outlier noise angle band in degrees")->expected(2);
  synth->add_option("--noise", noise_mode, "band or gaussian (per-axis std at the band midpoints)")
      ->check(CLI::IsMember({"band", "gaussian"}));
  synth->add_flag("--noiseless-ego", sspec.noiseless_ego, "Leave ego edges noise-free");
  synth->add_option("-o,--output", synth_out, "Output graph file");

  SuiteOptions suite_opts;
  std::string suite_out;
  auto* suite = synth->add_subcommand("suite", "Write the full synthetic sweep into a directory");
  suite->add_option("--scale", suite_opts.scale, "Fraction of the outlier sweep to keep per m");
  suite->add_option("--m-min", suite_opts.m_min, "Smallest m");
  suite->add_option("--m-max", suite_opts.m_max, "Largest m");
  suite->add_option("--m-step", suite_opts.m_step, "Step in m");
  suite->add_option("--seed", suite_opts.seed, "Suite seed");
  suite->add_option("-o,--output", suite_out, "Output directory")->required();

  // classify
  GraphInput cls_in;
  ParamOptions cls_params;
  std::string cls_method = "admm";
  double threshold = 0.5;
  bool cls_em = false;
  auto* cls = app.add_subcommand("classify", "Label loop closures; per-edge TSV on stdout");
  add_graph_input(cls, cls_in);
  add_params(cls, cls_params);
  cls->add_option("--method", cls_method, "bp, admm or exact")->check(CLI::IsMember({"bp", "admm", "exact"}));
  cls->add_option("--threshold", threshold, "Outlier iff inlier probability < threshold");
  cls->add_flag("--em", cls_em, "Estimate the parameters by EM first");

  // bench
  std::string bench_dir;
  std::string bench_methods = "bp,admm";
  std::string bench_out;
  std::string curve_out;
  BenchConfig bcfg;
  ParamOptions bench_params;
  bool no_timing = false;
  auto* bench = app.add_subcommand("bench", "Precision/recall over a suite directory of *.graph files");
  bench->add_option("suite", bench_dir, "Suite directory")->required()->check(CLI::ExistingDirectory);
  bench->add_option("--methods", bench_methods, "Comma-separated list of bp, admm, exact");
  bench->add_option("-o,--output", bench_out, "Results CSV")->required();
  bench->add_option("--curve", curve_out, "Also write per outlier-ratio aggregates to this CSV");
  bench->add_option("--threads", bcfg.threads, "Worker threads");
  bench->add_option("--threshold", bcfg.threshold, "Classification threshold");
  bench->add_flag("--em", bcfg.use_em, "Estimate parameters by EM per graph");
  bench->add_flag("--no-timing", no_timing, "Write 0 in the ms column");
  add_params(bench, bench_params);

  CLI11_PARSE(app, argc, argv);

  try {
    if (mcb->parsed()) {
      const PoseGraph g = mcb_in.load();
      const CycleBasis basis = minimum_cycle_basis(g);
      for (const auto& c : basis.cycles) {
        std::cout << "CYCLE " << c.length() << ' ' << fmt("%.9g", cycle_error(g, c));
        for (const auto& st : c.steps) std::cout << ' ' << st.edge << (st.dir == Direction::Forward ? ":+" : ":-");
        std::cout << '\n';
      }
      std::cerr << basis.cycles.size() << " cycles, total length " << basis.total_weight() << '\n';
    } else if (inf->parsed()) {
      const PoseGraph g = inf_in.load();
      const ModelParams p = inf_params.make(g);
      const FactorGraph fg = build_factor_graph(g, cap);
      const InferenceMethod method = parse_method(inf_method);
      if (inf_max_iters > 0) bp_opts.max_iters = admm_opts.max_iters = inf_max_iters;
      if (inf_tol > 0.0) bp_opts.tol = admm_opts.tol = inf_tol;
      admm_opts.cap = cap;
      Marginals m;
      if (method == InferenceMethod::ADMM) {
        std::ofstream trace;
        if (!trace_path.empty()) {
          trace = open_out(trace_path);
          trace << "iteration,r,t,rho\n";
        }
        m = run_admm(fg, p, admm_opts, [&](const AdmmIterate& it) {
              if (trace.is_open()) {
                trace << it.iteration << ',' << fmt("%.9e", it.r) << ',' << fmt("%.9e", it.t) << ','
                      << fmt("%.9g", it.rho) << '\n';
              }
            }).marginals;
      } else {
        m = infer(fg, p, method, {bp_opts, admm_opts, cap});
      }
      std::cout << "edge_id\tinlier_prob\n";
      for (std::size_t v = 0; v < fg.num_variables(); ++v) {
        std::cout << fg.variables[v] << '\t' << fmt("%.9f", m.inlier[v]) << '\n';
      }
      std::cerr << to_string(method) << ": " << (m.converged ? "converged" : "not converged") << " after "
                << m.iterations << " iterations\n";
    } else if (em->parsed()) {
      const PoseGraph g = em_in.load();
      const ModelParams init = em_params.make(g);
      const FactorGraph fg = build_factor_graph(g);
      em_cfg.inference = parse_method(em_method);
      em_cfg.include_psi = em_psi && !em_no_psi;
      const EmResult r = run_em(fg, init, em_cfg);
      std::cout << "round,sigma_deg,sigma_bar_deg,q,log_likelihood,inference_converged,inference_iters,mean_inlier\n";
      std::cout << "0," << fmt("%.6g", rad2deg(init.sigma)) << ',' << fmt("%.6g", rad2deg(init.sigma_bar))
                << ",NA," << fmt("%.9g", r.trace.initial_log_likelihood) << ",NA,NA,NA\n";
      for (const auto& round : r.trace.rounds) {
        std::cout << round.round << ',' << fmt("%.6g", rad2deg(round.params.sigma)) << ','
                  << fmt("%.6g", rad2deg(round.params.sigma_bar)) << ',' << fmt("%.9g", round.q) << ','
                  << fmt("%.9g", round.log_likelihood) << ',' << (round.inference_converged ? 1 : 0) << ','
                  << round.inference_iterations << ',' << fmt("%.6f", round.mean_inlier) << '\n';
      }
    } else if (synth->parsed()) {
      sspec.inlier_band = {deg2rad(inlier_band[0]), deg2rad(inlier_band[1])};
      sspec.outlier_band = {deg2rad(outlier_band[0]), deg2rad(outlier_band[1])};
      sspec.noise = noise_mode == "gaussian" ? NoiseMode::Gaussian : NoiseMode::Band;
      sspec.inlier_sigma = deg2rad(0.5 * (inlier_band[0] + inlier_band[1]));
      sspec.outlier_sigma = deg2rad(0.5 * (outlier_band[0] + outlier_band[1]));
      if (suite->parsed()) {
        suite_opts.base = sspec;
        fs::create_directories(suite_out);
        const auto items = suite_specs(suite_opts);
        for (const auto& item : items) write_graph_file(generate(item.spec), fs::path(suite_out) / (item.graph_id + ".graph"));
        std::cerr << "wrote " << items.size() << " graphs to " << suite_out << " (full sweep over this m range: "
                  << suite_cardinality(suite_opts.m_min, suite_opts.m_max, suite_opts.m_step) << ")\n";
      } else {
        if (synth_out.empty()) throw std::invalid_argument("synth: -o is required");
        write_graph_file(generate(sspec), synth_out);
      }
    } else if (cls->parsed()) {
      const PoseGraph g = cls_in.load();
      const ModelParams p = cls_params.make(g);
      const InferenceMethod method = parse_method(cls_method);
      const ClassificationResult r =
          cls_em ? classify_em(g, p, method, EmConfig{}, threshold) : classify(g, p, method, threshold);
      write_classification_tsv(r, std::cout);
      const auto& c = r.confusion;
      if (c.total() > 0) {
        auto show = [](std::optional<double> v) { return v ? fmt("%.4f", *v) : std::string("NA"); };
        std::cerr << "tp " << c.tp << " fp " << c.fp << " fn " << c.fn << " tn " << c.tn << " precision "
                  << show(c.precision()) << " recall " << show(c.recall()) << '\n';
      }
    } else if (bench->parsed()) {
      bcfg.methods = parse_methods(bench_methods);
      bcfg.timing = !no_timing;
      if (bench_params.params_deg.size() == 2) {
        bcfg.params.sigma = deg2rad(bench_params.params_deg[0]);
        bcfg.params.sigma_bar = deg2rad(bench_params.params_deg[1]);
        bcfg.params.validate();
      }
      const auto suite_items = load_suite_dir(bench_dir);
      const auto rows = run_benchmark(suite_items, bcfg);
      {
        auto out = open_out(bench_out);
        write_bench_csv(rows, out);
      }
      if (!curve_out.empty()) {
        auto out = open_out(curve_out);
        write_curve_csv(outlier_ratio_curve(rows, bcfg.methods), out);
      }
      std::size_t failed = 0;
      for (const auto& r : rows) {
        if (!r.error.empty()) {
          ++failed;
          std::cerr << r.graph_id << " (" << to_string(r.method) << "): " << r.error << '\n';
        }
      }
      std::cerr << rows.size() << " rows, " << failed << " failed\n";
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
