#include "proxflow/train.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "parallel.hpp"
#include "proxflow/conditional.hpp"
#include "proxflow/error.hpp"
#include "proxflow/io.hpp"
#include "proxflow/problems.hpp"

namespace proxflow {
namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr std::size_t kLossChunk = 256;

bool is_toy(const std::string& name) {
  for (const auto& t : toy_names())
    if (t == name) return true;
  return false;
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config field '") + key + "': " + e.what());
  }
}

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vec json_vec(const json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidArgument("checkpoint: '" + what + "' must be an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

Mat json_mat(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw InvalidArgument("checkpoint: '" + what + "' must be a nonempty array of rows");
  Mat m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(j[0].size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != j[0].size()) throw InvalidArgument("checkpoint: ragged matrix '" + what + "'");
    for (std::size_t k = 0; k < j[i].size(); ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
  }
  return m;
}

ordered_json config_to_json(const TrainConfig& c) {
  ordered_json j;
  j["n"] = c.n;
  j["d"] = c.d;
  j["K"] = c.K;
  j["p"] = c.p;
  j["h"] = c.h;
  j["gamma"] = c.gamma;
  j["batch_b"] = c.batch_b;
  j["epochs_e"] = c.epochs_e;
  j["steps_s"] = c.steps_s;
  j["lr_tau"] = c.lr_tau;
  j["penalty_weight"] = c.penalty_weight;
  j["seed"] = c.seed;
  j["inverse_tol"] = c.inverse_tol;
  j["inverse_max_iter"] = c.inverse_max_iter;
  j["polar_tol"] = c.polar_tol;
  j["polar_max_iter"] = c.polar_max_iter;
  j["logdet_mode"] = c.logdet_mode;
  j["kappa"] = c.kappa;
  j["activation"] = c.activation;
  j["activation_alpha"] = c.activation_alpha;
  j["problem"] = c.problem;
  j["projection"] = c.projection;
  j["clip_norm"] = c.clip_norm;
  j["probe_count"] = c.probe_count;
  j["components"] = c.components;
  j["problem_seed"] = c.problem_seed;
  return j;
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  const auto& names = TrainConfig::field_names();
  const std::set<std::string> known(names.begin(), names.end());
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw InvalidArgument("config: unknown key '" + key + "'");
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) read_field(j, key, field);
  };
  opt("n", c.n);
  opt("d", c.d);
  opt("K", c.K);
  opt("p", c.p);
  opt("h", c.h);
  opt("gamma", c.gamma);
  opt("batch_b", c.batch_b);
  opt("epochs_e", c.epochs_e);
  opt("steps_s", c.steps_s);
  opt("lr_tau", c.lr_tau);
  opt("penalty_weight", c.penalty_weight);
  opt("seed", c.seed);
  opt("inverse_tol", c.inverse_tol);
  opt("inverse_max_iter", c.inverse_max_iter);
  opt("polar_tol", c.polar_tol);
  opt("polar_max_iter", c.polar_max_iter);
  opt("logdet_mode", c.logdet_mode);
  opt("kappa", c.kappa);
  opt("activation", c.activation);
  opt("activation_alpha", c.activation_alpha);
  opt("problem", c.problem);
  opt("projection", c.projection);
  opt("clip_norm", c.clip_norm);
  opt("probe_count", c.probe_count);
  opt("components", c.components);
  opt("problem_seed", c.problem_seed);
  return c;
}

std::vector<std::size_t> layer_slots(const ProxFlow& flow) {
  std::vector<std::size_t> out;
  std::size_t base = 0;
  for (const auto& block : flow.blocks()) {
    for (std::size_t l = 0; l < block.phi().kappa(); ++l) out.push_back(base + 1 + 2 * l);
    base += block_param_count(block);
  }
  return out;
}

void accumulate(std::vector<Mat>& into, const std::vector<Mat>& add) {
  for (std::size_t i = 0; i < add.size() && i < into.size(); ++i)
    if (add[i].size() != 0) into[i] += add[i];
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

const std::vector<std::string>& TrainConfig::field_names() {
  static const std::vector<std::string> names{
      "n",         "d",           "K",           "p",          "h",          "gamma",         "batch_b",
      "epochs_e",  "steps_s",     "lr_tau",      "penalty_weight", "seed",   "inverse_tol",   "inverse_max_iter",
      "polar_tol", "polar_max_iter", "logdet_mode", "kappa",    "activation", "activation_alpha", "problem",
      "projection", "clip_norm",  "probe_count", "components", "problem_seed"};
  return names;
}

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw InvalidArgument(std::string("config: '") + name + "' must be positive");
  };
  positive(n, "n");
  positive(K, "K");
  positive(p, "p");
  positive(h, "h");
  positive(batch_b, "batch_b");
  positive(epochs_e, "epochs_e");
  positive(steps_s, "steps_s");
  positive(kappa, "kappa");
  positive(inverse_max_iter, "inverse_max_iter");
  positive(polar_max_iter, "polar_max_iter");
  positive(probe_count, "probe_count");
  if (!(lr_tau > 0.0)) throw InvalidArgument("config: 'lr_tau' must be positive");
  if (!(penalty_weight >= 0.0)) throw InvalidArgument("config: 'penalty_weight' must be >= 0");
  if (!(inverse_tol > 0.0) || !(polar_tol > 0.0)) throw InvalidArgument("config: tolerances must be positive");
  if (!(clip_norm > 0.0)) throw InvalidArgument("config: 'clip_norm' must be positive");
  const double bound = ResidualBlock::gamma_bound(kappa);
  if (!(gamma > 0.0 && gamma < bound))
    throw InvalidArgument("config: gamma = " + std::to_string(gamma) + " violates 0 < gamma < " +
                          std::to_string(bound) + " for kappa = " + std::to_string(kappa));
  if (logdet_mode != "exact" && logdet_mode != "estimator")
    throw InvalidArgument("config: 'logdet_mode' must be 'exact' or 'estimator'");
  if (projection != "unrolled" && projection != "straight_through")
    throw InvalidArgument("config: 'projection' must be 'unrolled' or 'straight_through'");
  Activation::parse(activation, activation_alpha);
  if (is_toy(problem)) {
    if (n != 2 || d != 0) throw InvalidArgument("config: toy problems need n = 2, d = 0");
  } else if (problem == "circle") {
    if (n != 2 || d != 1) throw InvalidArgument("config: the circle problem needs n = 2, d = 1");
  } else if (problem == "mixture") {
    if (d != n) throw InvalidArgument("config: the mixture problem needs d = n");
    positive(components, "components");
  } else {
    throw InvalidArgument("config: unknown problem '" + problem + "'");
  }
}

TrainConfig TrainConfig::preset(const std::string& name) {
  TrainConfig c;
  if (name == "toy") return c;
  if (name == "circle") {
    c.d = 1;
    c.batch_b = 800;
    c.problem = "circle";
    return c;
  }
  if (name == "mixture") {
    c.n = 50;
    c.d = 50;
    c.p = 2;
    c.h = 128;
    c.lr_tau = 5e-3;
    c.problem = "mixture";
    return c;
  }
  throw InvalidArgument("unknown preset '" + name + "' (expected toy, circle or mixture)");
}

std::string TrainConfig::to_json() const { return config_to_json(*this).dump(2); }

TrainConfig TrainConfig::from_json(const std::string& text) { return from_json(text, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const std::string& text, const TrainConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: invalid JSON: ") + e.what());
  }
  return config_from_json(j, base);
}

FlowShape flow_shape(const TrainConfig& cfg) {
  FlowShape s;
  s.dim = cfg.n;
  s.cond_dim = cfg.d;
  s.blocks = cfg.K;
  s.widen = cfg.p;
  s.hidden = cfg.h;
  s.kappa = cfg.kappa;
  s.gamma = cfg.gamma;
  s.act = Activation::parse(cfg.activation, cfg.activation_alpha);
  s.actnorm_identity = false;
  return s;
}

linalg::PolarOptions polar_options(const TrainConfig& cfg) {
  auto o = default_projection();
  o.tol = cfg.polar_tol;
  o.max_iter = cfg.polar_max_iter;
  return o;
}

FlowRecordOptions record_options(const TrainConfig& cfg) {
  FlowRecordOptions o;
  o.record.projection = cfg.projection == "straight_through" ? ProjectionGrad::straight_through
                                                             : ProjectionGrad::unrolled;
  o.mode = cfg.logdet_mode == "estimator" ? LogdetMode::estimator : LogdetMode::exact;
  o.estimator.probe_count = cfg.probe_count;
  return o;
}

SolverOptions solver_options(const TrainConfig& cfg) {
  SolverOptions o;
  o.tol = cfg.inverse_tol;
  o.max_iter = cfg.inverse_max_iter;
  return o;
}

// ---------------------------------------------------------------------------
// Loss

double orth_penalty(const ProxFlow& flow, double weight) {
  double acc = 0.0;
  for (const auto& block : flow.blocks())
    for (const auto& layer : block.phi().layers()) {
      const double dft = linalg::orth_defect(layer.t_tilde);
      acc += dft * dft;
    }
  return weight * acc;
}

LossResult nll_loss(const ProxFlow& flow, const Mat& x, const Mat* cond, const LossOptions& opts, Rng* rng) {
  if (x.cols() == 0) throw InvalidArgument("nll_loss: empty batch");
  if (flow.conditional() && (cond == nullptr || cond->cols() != x.cols()))
    throw InvalidArgument("nll_loss: conditional flow needs one condition column per sample");
  const bool estimator = opts.record.mode == LogdetMode::estimator;
  if (estimator && rng == nullptr) throw InvalidArgument("nll_loss: estimator mode needs an Rng");

  const std::vector<Mat> params = get_params(flow);
  LossResult out;
  out.grads.reserve(params.size());
  for (const auto& p : params) out.grads.push_back(Mat::Zero(p.rows(), p.cols()));

  const auto total = static_cast<std::size_t>(x.cols());
  const std::size_t chunks = (total + kLossChunk - 1) / kLossChunk;
  const double inv_b = 1.0 / static_cast<double>(total);
  std::vector<double> chunk_sum(chunks, 0.0);
  std::vector<std::vector<Mat>> chunk_grads(chunks);
  std::vector<std::uint64_t> chunk_seed(chunks, 0);
  if (estimator)
    for (auto& s : chunk_seed) s = rng->next_u64();

  const std::size_t threads = estimator && opts.record.estimator.probe_count > 1 ? 1 : worker_threads();
  detail::parallel_chunks(total, kLossChunk, threads, [&](std::size_t begin, std::size_t count) {
    const std::size_t c = begin / kLossChunk;
    const auto b = static_cast<Eigen::Index>(begin);
    const auto m = static_cast<Eigen::Index>(count);
    Mat cchunk;
    if (flow.conditional()) cchunk = cond->middleCols(b, m);
    const Mat* cp = flow.conditional() ? &cchunk : nullptr;
    Rng local(chunk_seed[c]);
    const std::size_t probes = estimator ? opts.record.estimator.probe_count : 1;
    std::vector<Mat> g(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) g[i] = Mat::Zero(params[i].rows(), params[i].cols());
    double s = 0.0;
    for (std::size_t probe = 0; probe < probes; ++probe) {
      ad::Tape tape;
      const ad::Var xin = tape.input(x.middleCols(b, m));
      SlotCursor slots;
      const FlowNodes fn = record_flow(tape, flow, slots, xin, cp, opts.record, estimator ? &local : nullptr);
      const ad::Var total_ld = tape.sum(fn.logdensity);
      s += tape.scalar(total_ld) / static_cast<double>(probes);
      accumulate(g, tape.backward(total_ld, Mat::Constant(1, 1, -inv_b / static_cast<double>(probes))).params());
    }
    chunk_sum[c] = s;
    chunk_grads[c] = std::move(g);
  });
  double sum_ld = 0.0;
  for (std::size_t c = 0; c < chunks; ++c) {
    sum_ld += chunk_sum[c];
    accumulate(out.grads, chunk_grads[c]);
  }
  out.nll = -sum_ld * inv_b;

  if (opts.penalty_weight > 0.0 && flow.size() > 0) {
    ad::Tape tape;
    const auto slots = layer_slots(flow);
    ad::Var acc;
    std::size_t k = 0;
    for (const auto& block : flow.blocks())
      for (const auto& layer : block.phi().layers()) {
        const ad::Var raw = tape.param(layer.t_tilde, slots[k++]);
        const ad::Var y = linalg::is_wide(layer.t_tilde) ? tape.transpose(raw) : raw;
        const ad::Var gram = tape.add_identity(tape.matmul(tape.transpose(y), y), -1.0);
        const ad::Var sq = tape.sum_squares(gram);
        acc = acc.valid() ? tape.add(acc, sq) : sq;
      }
    const ad::Var pen = tape.scale(acc, opts.penalty_weight);
    out.penalty = tape.scalar(pen);
    accumulate(out.grads, tape.backward(pen, Mat::Ones(1, 1)).params());
  }
  out.loss = out.nll + out.penalty;
  if (!std::isfinite(out.loss)) {
    std::ostringstream msg;
    msg << "nll_loss: non-finite loss (nll " << out.nll << ", penalty " << out.penalty << ") on a batch of "
        << total << " samples, |x|_max = " << x.cwiseAbs().maxCoeff();
    throw NumericalError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

void adam_step(AdamState& state, std::vector<Mat>& params, const std::vector<Mat>& grads, double lr,
               const std::vector<bool>* mask) {
  if (grads.size() != params.size()) throw InvalidArgument("adam_step: parameter/gradient count mismatch");
  if (mask != nullptr && mask->size() != params.size()) throw InvalidArgument("adam_step: mask size mismatch");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Mat::Zero(p.rows(), p.cols()));
      state.v.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }
  if (state.m.size() != params.size()) throw InvalidArgument("adam_step: state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (mask != nullptr && !(*mask)[i]) continue;
    if (grads[i].rows() != params[i].rows() || grads[i].cols() != params[i].cols())
      throw InvalidArgument("adam_step: gradient shape mismatch at tensor " + std::to_string(i));
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i].cwiseProduct(grads[i]);
    params[i].array() -= lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + state.eps);
  }
}

double clip_global_norm(std::vector<Mat>& grads, double max_norm, const std::vector<bool>* mask) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (mask == nullptr || (*mask)[i]) sq += grads[i].squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i = 0; i < grads.size(); ++i)
      if (mask == nullptr || (*mask)[i]) grads[i] *= s;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training

BatchSampler make_sampler(const TrainConfig& cfg) {
  if (is_toy(cfg.problem)) {
    const std::string name = cfg.problem;
    return [name](std::size_t count, Rng& rng) { return std::make_pair(Mat(), sample_toy(name, count, rng)); };
  }
  if (cfg.problem == "circle") {
    auto problem = std::make_shared<InverseProblem>(circle_problem());
    return [problem](std::size_t count, Rng& rng) { return problem->sample_pairs(count, rng); };
  }
  if (cfg.problem == "mixture") {
    Rng prng(cfg.problem_seed);
    auto problem = std::make_shared<InverseProblem>(mixture_problem(cfg.n, cfg.components, prng));
    return [problem](std::size_t count, Rng& rng) { return problem->sample_pairs(count, rng); };
  }
  throw InvalidArgument("make_sampler: unknown problem '" + cfg.problem + "'");
}

TrainResult train_loop(const TrainConfig& cfg, const BatchSampler& sampler, const TrainHooks& hooks) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng init_rng = root.split();
  Rng data_rng = root.split();
  Rng probe_rng = root.split();

  TrainResult result;
  result.flow = make_flow(flow_shape(cfg), init_rng);
  ProxFlow& flow = result.flow;
  const auto mask = trainable_mask(flow);
  const auto polar = polar_options(cfg);
  LossOptions lopts;
  lopts.penalty_weight = cfg.penalty_weight;
  lopts.record = record_options(cfg);
  AdamState adam;

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_e; ++epoch) {
    for (std::size_t s = 0; s < cfg.steps_s; ++s, ++step) {
      auto [cond, x] = sampler(cfg.batch_b, data_rng);
      const Mat* cp = flow.conditional() ? &cond : nullptr;
      if (x.rows() != static_cast<Eigen::Index>(cfg.n) || (cp != nullptr && cond.rows() != static_cast<Eigen::Index>(cfg.d)))
        throw InvalidArgument("train_loop: sampler returned data of the wrong dimension");
      try {
        if (step == 0) initialize_actnorm(flow, x, cp);
        LossResult r = nll_loss(flow, x, cp, lopts, &probe_rng);
        const double norm = clip_global_norm(r.grads, cfg.clip_norm, &mask);
        if (norm > cfg.clip_norm) {
          ++result.clipped_steps;
          if (hooks.log)
            hooks.log("step " + std::to_string(step) + ": gradient norm " + format_double(norm) + " clipped to " +
                      format_double(cfg.clip_norm));
        }
        auto params = get_params(flow);
        adam_step(adam, params, r.grads, cfg.lr_tau, &mask);
        set_params(flow, params, polar);
        result.history.push_back({step, r.loss, r.penalty});
        if (hooks.on_step) hooks.on_step(result.history.back());
      } catch (const ConvergenceError& e) {
        throw ConvergenceError("training step " + std::to_string(step) + ": " + e.what(), e.residual(),
                               e.iterations());
      } catch (const NumericalError& e) {
        throw NumericalError("training step " + std::to_string(step) + ": " + e.what());
      }
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, flow);
  }
  return result;
}

std::string history_csv(const std::vector<LossRecord>& history) {
  std::string out = "step,loss,penalty\n";
  for (const auto& r : history)
    out += std::to_string(r.step) + "," + format_double(r.loss) + "," + format_double(r.penalty) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_json(const ProxFlow& flow, const TrainConfig* cfg) {
  ordered_json j;
  j["version"] = 1;
  j["config"] = cfg != nullptr ? config_to_json(*cfg) : ordered_json::object();
  j["dim"] = flow.dim();
  j["cond_dim"] = flow.cond_dim();
  if (flow.cond_norm().initialized)
    j["cond_norm"] = {{"s", vec_json(flow.cond_norm().scale)}, {"b", vec_json(flow.cond_norm().shift)}};
  ordered_json blocks = ordered_json::array();
  for (const auto& block : flow.blocks()) {
    ordered_json b;
    b["actnorm"] = {{"s", vec_json(block.actnorm().scale)},
                    {"b", vec_json(block.actnorm().shift)},
                    {"initialized", block.actnorm().initialized}};
    b["gamma"] = block.gamma();
    ordered_json layers = ordered_json::array();
    for (const auto& layer : block.phi().layers()) {
      ordered_json l;
      l["T_tilde"] = mat_json(layer.t_tilde);
      l["b"] = vec_json(layer.bias);
      l["act"] = layer.act.name();
      l["alpha"] = layer.act.alpha;
      layers.push_back(std::move(l));
    }
    b["pnn"] = {{"p", block.phi().widen()}, {"layers", std::move(layers)}};
    blocks.push_back(std::move(b));
  }
  j["blocks"] = std::move(blocks);
  return j.dump() + "\n";
}

ProxFlow flow_from_checkpoint(const std::string& text, TrainConfig* cfg) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != 1) throw InvalidArgument("checkpoint: unsupported version");
    TrainConfig c;
    const bool has_cfg = j.contains("config") && j["config"].is_object() && !j["config"].empty();
    if (has_cfg) c = config_from_json(j["config"], TrainConfig{});
    if (cfg != nullptr) *cfg = c;
    auto polar = has_cfg ? polar_options(c) : default_projection();
    const std::size_t cond_dim = j.value("cond_dim", std::size_t{0});
    std::size_t dim = j.value("dim", std::size_t{0});
    const auto& blocks = j.at("blocks");
    if (dim == 0 && !blocks.empty()) dim = blocks[0].at("actnorm").at("s").size();
    ProxFlow flow(dim, cond_dim);
    for (const auto& b : blocks) {
      const auto& pj = b.at("pnn");
      const std::size_t p = pj.at("p").get<std::size_t>();
      std::vector<ProxBlock> layers;
      for (const auto& l : pj.at("layers")) {
        const Activation act = Activation::parse(l.at("act").get<std::string>(), l.value("alpha", 1.0));
        layers.emplace_back(json_mat(l.at("T_tilde"), "T_tilde"), json_vec(l.at("b"), "b"), act, polar);
      }
      ActNorm an(json_vec(b.at("actnorm").at("s"), "actnorm.s"), json_vec(b.at("actnorm").at("b"), "actnorm.b"));
      an.initialized = b.at("actnorm").value("initialized", true);
      flow.add_block(ResidualBlock(b.at("gamma").get<double>(), Pnn(dim + cond_dim, p, std::move(layers)),
                                   std::move(an), cond_dim));
    }
    if (j.contains("cond_norm")) {
      ActNorm norm(json_vec(j["cond_norm"].at("s"), "cond_norm.s"), json_vec(j["cond_norm"].at("b"), "cond_norm.b"));
      norm.initialized = true;
      flow.set_cond_norm(std::move(norm));
    }
    return flow;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("checkpoint: malformed document: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const ProxFlow& flow, const TrainConfig* cfg) {
  write_file_atomic(path, checkpoint_json(flow, cfg));
}

ProxFlow load_checkpoint(const std::string& path, TrainConfig* cfg) {
  return flow_from_checkpoint(read_file(path), cfg);
}

}  // namespace proxflow
