#include "proxflow/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "proxflow/conditional.hpp"
#include "proxflow/error.hpp"
#include "proxflow/io.hpp"
#include "proxflow/metrics.hpp"
#include "proxflow/problems.hpp"
#include "proxflow/train.hpp"

namespace proxflow {
namespace {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Manifest {
  ordered_json doc = ordered_json::object();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> outputs;
};

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& path, Manifest& m) {
  m.doc["outputs"] = m.outputs;
  m.doc["wall_clock_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - m.start).count();
  m.doc["finished_utc"] = utc_now();
  m.doc["version"] = kVersion;
  write_file_atomic(path, m.doc.dump(2) + "\n");
}

Vec parse_vector(const std::string& text) {
  std::vector<double> vals;
  std::string cell;
  std::istringstream in(text);
  while (std::getline(in, cell, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw InvalidArgument("cannot parse '" + cell + "' as a number");
    }
  }
  if (vals.empty()) throw InvalidArgument("empty vector '" + text + "'");
  return Eigen::Map<Vec>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::vector<std::size_t> parse_grid(const std::string& text) {
  std::vector<std::size_t> g;
  for (double v : parse_vector(text)) {
    if (!(v >= 1.0) || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw InvalidArgument("grid entries must be positive integers");
    g.push_back(static_cast<std::size_t>(v));
  }
  return g;
}

// Samples of a CSV: x-columns, or all columns if none are named x*.
Mat sample_block(const CsvTable& t, const std::string& prefix) {
  Mat b = t.block(prefix);
  return b.rows() > 0 ? b : t.data;
}

TrainConfig load_config(const std::string& path, const std::string& preset) {
  const TrainConfig base = preset.empty() ? TrainConfig{} : TrainConfig::preset(preset);
  TrainConfig cfg = path.empty() ? base : TrainConfig::from_json(read_file(path), base);
  cfg.validate();
  return cfg;
}

void manifest_config(Manifest& m, const TrainConfig& cfg) {
  m.doc["config"] = ordered_json::parse(cfg.to_json());
  m.doc["seed"] = cfg.seed;
}

std::string sibling_manifest(const std::string& out) { return out + ".manifest.json"; }

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config, const std::string& preset, const std::string& out_dir, Manifest& m,
              std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = load_config(config, preset);
  manifest_config(m, cfg);
  fs::create_directories(out_dir);
  const std::string ckpt = (fs::path(out_dir) / "checkpoint.json").string();
  const std::string hist = (fs::path(out_dir) / "loss_history.csv").string();
  write_file_atomic((fs::path(out_dir) / "config.json").string(), cfg.to_json() + "\n");
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t epoch, const ProxFlow& flow) {
    save_checkpoint(ckpt, flow, &cfg);
    out << "epoch " << epoch + 1 << "/" << cfg.epochs_e << " checkpoint written\n";
  };
  hooks.log = [&](const std::string& msg) { err << msg << "\n"; };
  const TrainResult r = train_loop(cfg, make_sampler(cfg), hooks);
  save_checkpoint(ckpt, r.flow, &cfg);
  write_file_atomic(hist, history_csv(r.history));
  m.outputs = {"config.json", "checkpoint.json", "loss_history.csv"};
  m.doc["clipped_steps"] = r.clipped_steps;
  m.doc["final_loss"] = r.history.empty() ? 0.0 : r.history.back().loss;
  write_manifest((fs::path(out_dir) / "manifest.json").string(), m);
  return 0;
}

int cmd_sample(const std::string& ckpt_path, std::size_t count, const std::string& cond, std::uint64_t seed,
               const std::string& out_path, Manifest& m) {
  TrainConfig cfg;
  const ProxFlow flow = load_checkpoint(ckpt_path, &cfg);
  const SolverOptions so = solver_options(cfg);
  Rng rng(seed);
  if (!flow.conditional()) {
    if (!cond.empty()) throw InvalidArgument("--cond given for an unconditional checkpoint");
    write_samples_csv(out_path, flow_sample(flow, count, rng, so));
  } else {
    if (cond.empty()) throw InvalidArgument("conditional checkpoint needs --cond");
    Mat ys;
    if (fs::exists(cond)) {
      ys = read_csv(cond).block("y");
      if (ys.rows() == 0) ys = read_csv(cond).data;
    } else {
      ys = parse_vector(cond);
    }
    if (ys.rows() != static_cast<Eigen::Index>(flow.cond_dim()))
      throw InvalidArgument("condition has " + std::to_string(ys.rows()) + " entries, checkpoint expects " +
                            std::to_string(flow.cond_dim()));
    const auto per = static_cast<Eigen::Index>(count);
    Mat xs(static_cast<Eigen::Index>(flow.dim()), per * ys.cols());
    Mat yall(ys.rows(), per * ys.cols());
    for (Eigen::Index j = 0; j < ys.cols(); ++j) {
      xs.middleCols(j * per, per) = cond_sample(flow, ys.col(j), count, rng, so);
      yall.middleCols(j * per, per) = ys.col(j).replicate(1, per);
    }
    write_samples_csv(out_path, xs, &yall);
  }
  m.doc["seed"] = seed;
  m.outputs = {out_path};
  write_manifest(sibling_manifest(out_path), m);
  return 0;
}

std::pair<ProxFlow, Mat> load_with_cond(const std::string& ckpt_path, const CsvTable& in, TrainConfig& cfg) {
  ProxFlow flow = load_checkpoint(ckpt_path, &cfg);
  Mat y;
  if (flow.conditional()) {
    y = in.block("y");
    if (y.rows() != static_cast<Eigen::Index>(flow.cond_dim()))
      throw InvalidArgument("input CSV needs columns y0..y" + std::to_string(flow.cond_dim() - 1));
  }
  return {std::move(flow), std::move(y)};
}

int cmd_density(const std::string& ckpt_path, const std::string& in_path, const std::string& out_path, Manifest& m) {
  const CsvTable in = read_csv(in_path);
  TrainConfig cfg;
  auto [flow, y] = load_with_cond(ckpt_path, in, cfg);
  const Mat x = in.block("x");
  if (x.rows() != static_cast<Eigen::Index>(flow.dim()))
    throw InvalidArgument("input CSV needs columns x0..x" + std::to_string(flow.dim() - 1));
  const ForwardResult r = flow_forward_logdensity(flow, x, flow.conditional() ? &y : nullptr);
  std::vector<std::string> header = sample_header(flow.dim(), flow.cond_dim());
  for (std::size_t i = 0; i < flow.dim(); ++i) header.push_back("z" + std::to_string(i));
  header.push_back("logdensity");
  Mat table(static_cast<Eigen::Index>(header.size()), x.cols());
  const auto d = static_cast<Eigen::Index>(flow.cond_dim()), n = x.rows();
  if (d > 0) table.topRows(d) = y;
  table.middleRows(d, n) = x;
  table.middleRows(d + n, n) = r.z;
  table.bottomRows(1) = r.logdensity.transpose();
  write_csv(out_path, header, table);
  m.outputs = {out_path};
  write_manifest(sibling_manifest(out_path), m);
  return 0;
}

int cmd_invert(const std::string& ckpt_path, const std::string& in_path, const std::string& out_path, Manifest& m) {
  const CsvTable in = read_csv(in_path);
  TrainConfig cfg;
  auto [flow, y] = load_with_cond(ckpt_path, in, cfg);
  Mat z = in.block("z");
  if (z.rows() == 0) z = in.block("x");
  if (z.rows() != static_cast<Eigen::Index>(flow.dim()))
    throw InvalidArgument("input CSV needs columns z0..z" + std::to_string(flow.dim() - 1));
  const Mat x = flow_inverse(flow, z, flow.conditional() ? &y : nullptr, solver_options(cfg));
  write_samples_csv(out_path, x, flow.conditional() ? &y : nullptr);
  m.outputs = {out_path};
  write_manifest(sibling_manifest(out_path), m);
  return 0;
}

int cmd_oracle(const std::string& problem_name, const std::string& y_text, std::size_t count, std::size_t dim,
               std::size_t components, std::uint64_t problem_seed, std::uint64_t seed, const std::string& out_path,
               Manifest& m) {
  Rng rng(seed);
  InverseProblem problem;
  if (problem_name == "circle") {
    problem = circle_problem();
  } else if (problem_name == "mixture") {
    Rng prng(problem_seed);
    problem = mixture_problem(dim, components, prng);
  } else {
    throw InvalidArgument("unknown problem '" + problem_name + "' (expected circle or mixture)");
  }
  Mat x, y;
  if (y_text.empty()) {
    std::tie(y, x) = problem.sample_pairs(count, rng);
  } else {
    const Vec yv = parse_vector(y_text);
    if (yv.size() != static_cast<Eigen::Index>(problem.d))
      throw InvalidArgument("--y has " + std::to_string(yv.size()) + " entries, problem expects " +
                            std::to_string(problem.d));
    x = problem_name == "circle" ? circle_posterior_sample(problem, yv(0), count, rng)
                                 : gmm_sample(mixture_posterior(problem, yv), count, rng);
    y = yv.replicate(1, static_cast<Eigen::Index>(count));
  }
  write_samples_csv(out_path, x, &y);
  m.doc["seed"] = seed;
  m.doc["problem_seed"] = problem_seed;
  m.outputs = {out_path};
  write_manifest(sibling_manifest(out_path), m);
  return 0;
}

int cmd_eval(const std::string& metric, const std::string& a_path, const std::string& b_path,
             const std::string& grid_text, const std::string& out_path, Manifest& m, std::ostream& out) {
  const Mat a = sample_block(read_csv(a_path), "x");
  const Mat b = sample_block(read_csv(b_path), "x");
  std::string report;
  if (metric == "w2") {
    report = metric_report_json("w2", empirical_w2(a, b), static_cast<std::size_t>(a.cols()), {}, 0);
  } else if (metric == "kl") {
    GridSpec g;
    g.bins = grid_text.empty() ? std::vector<std::size_t>(static_cast<std::size_t>(a.rows()), 64)
                               : parse_grid(grid_text);
    const KlResult r = empirical_kl(a, b, g);
    report = metric_report_json("kl", r.value, static_cast<std::size_t>(a.cols()), g.bins, r.out_of_box);
  } else {
    throw InvalidArgument("unknown metric '" + metric + "' (expected kl or w2)");
  }
  if (out_path.empty()) {
    out << report << "\n";
  } else {
    write_file_atomic(out_path, report + "\n");
    m.outputs = {out_path};
    write_manifest(sibling_manifest(out_path), m);
  }
  return 0;
}

// Central differences of the full loss on a sample of coordinates.
int cmd_gradcheck(const std::string& config, const std::string& preset, std::size_t coords, double step,
                  std::size_t probe_draws, std::ostream& out) {
  if (probe_draws < 2) throw InvalidArgument("--probe-draws must be at least 2");
  const TrainConfig cfg = load_config(config, preset);
  Rng root(cfg.seed);
  Rng init_rng = root.split();
  Rng data_rng = root.split();
  ProxFlow flow = make_flow(flow_shape(cfg), init_rng);
  auto [cond, x] = make_sampler(cfg)(cfg.batch_b, data_rng);
  const Mat* cp = flow.conditional() ? &cond : nullptr;
  initialize_actnorm(flow, x, cp);
  // Move off the identity-like start so every parameter matters.
  auto params = get_params(flow);
  const auto mask = trainable_mask(flow);
  for (std::size_t i = 0; i < params.size(); ++i)
    if (mask[i]) params[i] += 0.1 * init_rng.normal_matrix(params[i].rows(), params[i].cols());
  const auto polar = polar_options(cfg);
  set_params(flow, params, polar);

  LossOptions lo;
  lo.penalty_weight = cfg.penalty_weight;
  lo.record = record_options(cfg);
  LossOptions exact = lo;
  exact.record.mode = LogdetMode::exact;
  const bool estimator = lo.record.mode == LogdetMode::estimator;
  auto loss_at = [&](const std::vector<Mat>& p, const LossOptions& opts, Rng* r, std::vector<Mat>* grads) {
    ProxFlow f = flow;
    set_params(f, p, polar);
    LossResult res = nll_loss(f, x, cp, opts, r);
    if (grads != nullptr) *grads = std::move(res.grads);
    return res.loss;
  };
  // The roulette gradient is unbiased but is not the derivative of a
  // fixed-probe loss, so in estimator mode the analytic side is a probe
  // average (with its standard error) and the reference is the exact loss.
  std::vector<Mat> grads, grads_sq;
  double base = 0.0;
  if (!estimator) {
    base = loss_at(params, exact, nullptr, &grads);
  } else {
    Rng probe_rng(root.next_u64());
    for (std::size_t r = 0; r < probe_draws; ++r) {
      std::vector<Mat> g;
      base += loss_at(params, lo, &probe_rng, &g) / static_cast<double>(probe_draws);
      if (grads.empty()) {
        for (const auto& t : g) {
          grads.push_back(Mat::Zero(t.rows(), t.cols()));
          grads_sq.push_back(Mat::Zero(t.rows(), t.cols()));
        }
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        grads[i] += g[i] / static_cast<double>(probe_draws);
        grads_sq[i] += g[i].cwiseProduct(g[i]) / static_cast<double>(probe_draws);
      }
    }
  }
  const double tol = estimator ? 1e-3 : 1e-4;

  // Deterministic coordinate sample over trainable tensors.
  std::vector<std::pair<std::size_t, Eigen::Index>> all;
  for (std::size_t i = 0; i < params.size(); ++i)
    if (mask[i])
      for (Eigen::Index k = 0; k < params[i].size(); ++k) all.emplace_back(i, k);
  Rng pick(cfg.seed ^ 0x5eedULL);
  double worst = 0.0;
  ordered_json rows = ordered_json::array();
  const auto names = param_names(flow);
  for (std::size_t c = 0; c < std::min(coords, all.size()); ++c) {
    const auto [i, k] = all[pick.below(all.size())];
    auto plus = params, minus = params;
    plus[i].data()[k] += step;
    minus[i].data()[k] -= step;
    const double fd = (loss_at(plus, exact, nullptr, nullptr) - loss_at(minus, exact, nullptr, nullptr)) / (2.0 * step);
    const double an = grads[i].data()[k];
    const double scale = std::max(1e-6, std::max(std::abs(fd), std::abs(an)));
    double rel = std::abs(fd - an) / scale;
    ordered_json row{{"param", names[i]}, {"index", k}, {"analytic", an}, {"finite_difference", fd}};
    if (estimator) {
      const double var = std::max(0.0, grads_sq[i].data()[k] - an * an);
      const double se = std::sqrt(var / static_cast<double>(probe_draws - 1));
      row["standard_error"] = se;
      // Within 4 standard errors counts as agreement.
      rel = std::max(0.0, std::abs(fd - an) - 4.0 * se) / scale;
    }
    row["rel_err"] = rel;
    worst = std::max(worst, rel);
    rows.push_back(std::move(row));
  }
  ordered_json rep;
  rep["mode"] = cfg.logdet_mode;
  rep["loss"] = base;
  rep["checked"] = rows.size();
  rep["max_rel_err"] = worst;
  rep["tolerance"] = tol;
  rep["pass"] = worst <= tol;
  rep["coordinates"] = std::move(rows);
  out << rep.dump(2) << "\n";
  if (worst > tol) throw NumericalError("gradient check failed: max relative error " + format_double(worst));
  return 0;
}

void emit_error(std::ostream& err, const char* kind, const std::string& msg) {
  ordered_json j;
  j["error"] = kind;
  j["message"] = msg;
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"proximal residual flows"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config, preset, out_path, ckpt, cond, in_path, problem, y_text, metric, a_path, b_path, grid;
  std::size_t count = 1000, dim = 50, components = 5, coords = 40, probe_draws = 2000;
  std::uint64_t seed = 0, problem_seed = 0;
  double step = 1e-6;

  auto* train = app.add_subcommand("train", "Train a flow from a JSON config");
  train->add_option("--config", config, "TrainConfig JSON (overrides the preset)")->check(CLI::ExistingFile);
  train->add_option("--preset", preset, "toy, circle or mixture")->check(CLI::IsMember({"toy", "circle", "mixture"}));
  train->add_option("--out", out_path, "Run directory")->required();

  auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
  sample->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  sample->add_option("-n", count, "Samples (per condition)")->required();
  sample->add_option("--cond", cond, "Condition as 'a,b,...' or a CSV with y-columns");
  sample->add_option("--seed", seed);
  sample->add_option("--out", out_path)->required();

  auto* density = app.add_subcommand("density", "Evaluate log-densities");
  density->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  density->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  density->add_option("--out", out_path)->required();

  auto* invert = app.add_subcommand("invert", "Map latent points back through the flow");
  invert->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  invert->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  invert->add_option("--out", out_path)->required();

  auto* oracle = app.add_subcommand("oracle", "Ground-truth samples of an inverse problem");
  oracle->add_option("--problem", problem)->required()->check(CLI::IsMember({"circle", "mixture"}));
  oracle->add_option("--y", y_text, "Observation; joint (y, x) draws when omitted");
  oracle->add_option("-n", count)->required();
  oracle->add_option("--dim", dim, "Mixture dimension");
  oracle->add_option("--components", components);
  oracle->add_option("--problem-seed", problem_seed);
  oracle->add_option("--seed", seed);
  oracle->add_option("--out", out_path)->required();

  auto* eval = app.add_subcommand("eval", "Compare two sample sets");
  eval->add_option("--metric", metric)->required()->check(CLI::IsMember({"kl", "w2"}));
  eval->add_option("--a", a_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--b", b_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--grid", grid, "Bins per dimension, e.g. 64,64");
  eval->add_option("--out", out_path);

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of loss gradients");
  gradcheck->add_option("--config", config)->check(CLI::ExistingFile);
  gradcheck->add_option("--preset", preset)->check(CLI::IsMember({"toy", "circle", "mixture"}));
  gradcheck->add_option("--coords", coords);
  gradcheck->add_option("--step", step);
  gradcheck->add_option("--probe-draws", probe_draws, "Estimator mode: gradient draws averaged per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion& e) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what());
    return 1;
  }

  Manifest m;
  m.doc["started_utc"] = utc_now();
  std::vector<std::string> args(argv, argv + argc);
  m.doc["argv"] = args;
  m.doc["command"] = app.get_subcommands().front()->get_name();
  try {
    if (*train) return cmd_train(config, preset, out_path, m, out, err);
    if (*sample) return cmd_sample(ckpt, count, cond, seed, out_path, m);
    if (*density) return cmd_density(ckpt, in_path, out_path, m);
    if (*invert) return cmd_invert(ckpt, in_path, out_path, m);
    if (*oracle) return cmd_oracle(problem, y_text, count, dim, components, problem_seed, seed, out_path, m);
    if (*eval) return cmd_eval(metric, a_path, b_path, grid, out_path, m, out);
    if (*gradcheck) return cmd_gradcheck(config, preset, coords, step, probe_draws, out);
  } catch (const InvalidArgument& e) {
    emit_error(err, "usage", e.what());
    return 1;
  } catch (const ConvergenceError& e) {
    emit_error(err, "convergence", e.what());
    return 2;
  } catch (const NumericalError& e) {
    emit_error(err, "numerical", e.what());
    return 2;
  } catch (const std::exception& e) {
    emit_error(err, "io", e.what());
    return 1;
  }
  return 1;
}

}  // namespace proxflow
