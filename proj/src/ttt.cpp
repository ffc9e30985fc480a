#include "ttvi/ttt.hpp"

#include <cmath>
#include <ctime>
#include <memory>
#include <random>

#include <json.hpp>

#include "ttvi/checkpoint.hpp"
#include "ttvi/errors.hpp"
#include "ttvi/rng.hpp"

namespace ttvi {

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::naive: return "naive";
    case Scheme::online: return "online";
    case Scheme::minibatch: return "minibatch";
  }
  return "?";
}

Scheme parse_scheme(const std::string& name) {
  for (auto s : kAllSchemes) {
    if (scheme_name(s) == name) return s;
  }
  throw ContractError("unknown scheme '" + name + "' (expected naive|online|minibatch)");
}

std::string task_name(Task t) { return t == Task::rotation ? "rotation" : "mae"; }

Task parse_task(const std::string& name) {
  for (auto t : kAllTasks) {
    if (task_name(t) == name) return t;
  }
  throw ContractError("unknown task '" + name + "' (expected rotation|mae)");
}

Partition task_head(Task t) { return t == Task::rotation ? Partition::rotation_head : Partition::mae_head; }

void TTTConfig::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw DomainError("ttt: eta must be positive, got " + std::to_string(eta));
  if (ttt_epochs < 1) throw DomainError("ttt: ttt_epochs must be >= 1 (use the no-ttt flag for no adaptation)");
  if (batch_size < 1) throw DomainError("ttt: batch_size must be >= 1");
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) throw DomainError("ttt: mask_ratio must lie in (0, 1]");
}

std::uint64_t TestBatch::key() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& item : items) {
    for (unsigned char c : item.id) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;  // separator so ("ab","c") and ("a","bc") differ
    h *= 0x100000001b3ULL;
  }
  return h;
}

void TestStream::validate() const {
  if (batches.empty()) throw ContractError("test stream is empty");
  for (std::size_t i = 0; i < batches.size(); ++i) {
    if (batches[i].items.empty()) throw ContractError("test batch " + std::to_string(i) + " is empty");
  }
}

TestStream make_stream(std::vector<TestItem> items, std::size_t batch_size) {
  if (batch_size < 1) throw DomainError("make_stream: batch_size must be >= 1");
  TestStream s;
  for (std::size_t i = 0; i < items.size(); i += batch_size) {
    TestBatch b;
    for (std::size_t j = i; j < std::min(items.size(), i + batch_size); ++j) b.items.push_back(std::move(items[j]));
    s.batches.push_back(std::move(b));
  }
  return s;
}

template <typename T>
Tensor<T> ssl_inputs(const TestBatch& batch) {
  if (batch.items.empty()) throw ContractError("ssl_inputs: empty batch");
  const Shape& vs = batch.items.front().first.shape();
  if (vs.size() != 3) throw ShapeError("ssl_inputs: expected [D,H,W] frames, got " + to_string(vs));
  const std::size_t n = 2 * batch.items.size();
  Tensor<T> out({n, 1, vs[0], vs[1], vs[2]});
  const std::size_t vol = numel(vs);
  std::size_t slot = 0;
  for (const auto& item : batch.items) {
    for (const auto* frame : {&item.first, &item.last}) {
      require_same_shape(frame->shape(), vs, "ssl_inputs");
      for (std::size_t i = 0; i < vol; ++i) out[slot * vol + i] = static_cast<T>((*frame)[i]);
      ++slot;
    }
  }
  return out;
}

std::uint64_t instance_seed(std::uint64_t seed, Task task, std::uint64_t batch_key, std::size_t step) {
  return derive_seed(seed, {static_cast<std::uint64_t>(task), batch_key, step});
}

template <typename T>
ag::NodeId ssl_objective(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                         const Tensor<T>& inputs, Task task, std::uint64_t instance_seed,
                         std::array<std::size_t, 3> mask_patch, double mask_ratio) {
  const Shape& s = inputs.shape();
  if (s.size() != 5 || s[1] != 1) throw ShapeError("ssl_objective: expected [N,1,D,H,W], got " + to_string(s));
  if (task == Task::rotation) {
    std::mt19937_64 rng(instance_seed);
    std::uniform_int_distribution<int> quarter(0, 3);
    const std::size_t vol = s[2] * s[3] * s[4];
    Tensor<T> rotated(s);
    std::vector<RotationLabel> labels;
    for (std::size_t n = 0; n < s[0]; ++n) {
      labels.emplace_back(quarter(rng));
      Tensor<T> one({s[2], s[3], s[4]});
      std::copy_n(inputs.raw() + n * vol, vol, one.raw());
      const Tensor<T> r = rotate(one, labels.back());
      std::copy_n(r.raw(), vol, rotated.raw() + n * vol);
    }
    const auto feats = net::extract(g, params, bound, g.constant(std::move(rotated)));
    const auto logits = net::rotation_logits(g, params, bound, feats);
    return rotation_loss(g, logits, one_hot<T>(labels));
  }
  const auto mask = make_mask({s[2], s[3], s[4]}, mask_patch, mask_ratio, instance_seed);
  const auto feats = net::extract(g, params, bound, g.constant(apply_mask(inputs, mask)));
  const auto recon = net::reconstruct(g, params, bound, feats);
  return mae_loss(g, recon, inputs, mask);
}

template <typename T>
SslGrad<T> ssl_grad(const ParamSet<T>& theta, const Tensor<T>& inputs, const TTTConfig& cfg, std::uint64_t instance,
                    const std::vector<double>& trace) {
  std::array<bool, 4> trainable{};
  for (auto p : kAllPartitions) trainable[static_cast<std::size_t>(p)] = !cfg.frozen(p);
  ag::Graph<T> g;
  const auto bound = bind(g, theta, trainable);
  const auto loss = ssl_objective(g, theta, bound, inputs, cfg.task, instance, cfg.mask_patch, cfg.mask_ratio);
  SslGrad<T> out;
  out.loss = static_cast<double>(g.value(loss).item());
  if (!std::isfinite(out.loss)) {
    auto t = trace;
    t.push_back(out.loss);
    throw NumericalError("non-finite " + task_name(cfg.task) + " loss after " + std::to_string(trace.size()) +
                             " steps",
                         std::move(t));
  }
  if (g.requires_grad(loss)) out.grads = collect_gradients(g.backward(loss), bound);
  return out;
}

double cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

void AdaptationLog::record(Scheme scheme, Task task, std::size_t batch_index, std::size_t step, double loss,
                           double elapsed_s) const {
  if (out == nullptr) return;
  const nlohmann::json j{{"scheme", scheme_name(scheme)}, {"task", task_name(task)}, {"batch_index", batch_index},
                         {"step", step},                 {"loss", loss},            {"elapsed_s", elapsed_s}};
  *out << j.dump() << '\n';
}

namespace {

// Owns the optimizer so SGD and Adam share the scheme loops.
class Stepper {
 public:
  Stepper(const ParamSet<float>& like, const TTTConfig& cfg) : eta_(cfg.eta) {
    if (cfg.optimizer == Optimizer::adam) adam_ = std::make_unique<Adam<float>>(like, AdamOptions{.lr = cfg.eta});
  }
  void step(ParamSet<float>& theta, const GradMap<float>& grads) {
    if (adam_) {
      adam_->step(theta, grads);
    } else {
      sgd_step(theta, grads, eta_);
    }
  }

 private:
  double eta_;
  std::unique_ptr<Adam<float>> adam_;
};

void prepare(const TestStream& stream, const TTTConfig& cfg) {
  cfg.validate();
  stream.validate();
}

// `steps` inner updates on one batch; `first_step` offsets the instance counter
// (naive uses the epoch index).
void adapt_batch(AdaptationState& st, Stepper& stepper, const TestBatch& batch, std::size_t batch_index,
                 std::size_t first_step, std::size_t steps, const TTTConfig& cfg, const AdaptationLog& log,
                 double t0) {
  const auto inputs = ssl_inputs<float>(batch);
  const auto key = batch.key();
  for (std::size_t s = first_step; s < first_step + steps; ++s) {
    auto r = ssl_grad(st.theta, inputs, cfg, instance_seed(cfg.seed, cfg.task, key, s), st.loss_trace);
    st.loss_trace.push_back(r.loss);
    stepper.step(st.theta, r.grads);
    ++st.step_count;
    log.record(cfg.scheme, cfg.task, batch_index, s, r.loss, cpu_seconds() - t0);
  }
}

}  // namespace

AdaptationState naive_ttt(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                          const AdaptationLog& log) {
  prepare(stream, cfg);
  AdaptationState st{theta0, 0, std::vector<double>(stream.m(), 0.0), {}};
  Stepper stepper(theta0, cfg);
  const double t0 = cpu_seconds();
  for (std::size_t e = 0; e < cfg.ttt_epochs; ++e) {
    for (std::size_t i = 0; i < stream.m(); ++i) {
      const double b0 = cpu_seconds();
      adapt_batch(st, stepper, stream.batches[i], i, e, 1, cfg, log, t0);
      st.per_batch_seconds[i] += cpu_seconds() - b0;
    }
  }
  return st;
}

std::vector<AdaptationState> online_ttt(const ParamSet<float>& theta0, const TestStream& stream,
                                        const TTTConfig& cfg, const AdaptationLog& log) {
  prepare(stream, cfg);
  std::vector<AdaptationState> out;
  out.reserve(stream.m());
  const double t0 = cpu_seconds();
  for (std::size_t i = 0; i < stream.m(); ++i) {
    const double b0 = cpu_seconds();
    AdaptationState st{theta0, 0, {}, {}};
    Stepper stepper(theta0, cfg);
    adapt_batch(st, stepper, stream.batches[i], i, 0, cfg.ttt_epochs, cfg, log, t0);
    st.per_batch_seconds.push_back(cpu_seconds() - b0);
    out.push_back(std::move(st));
  }
  return out;
}

AdaptationState minibatch_ttt(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                              const AdaptationLog& log, std::vector<ParamSet<float>>* per_batch) {
  prepare(stream, cfg);
  AdaptationState st{theta0, 0, {}, {}};
  Stepper stepper(theta0, cfg);
  const double t0 = cpu_seconds();
  for (std::size_t i = 0; i < stream.m(); ++i) {
    const double b0 = cpu_seconds();
    adapt_batch(st, stepper, stream.batches[i], i, 0, cfg.ttt_epochs, cfg, log, t0);
    st.per_batch_seconds.push_back(cpu_seconds() - b0);
    if (per_batch != nullptr) per_batch->push_back(st.theta);
  }
  return st;
}

std::vector<Tensor<float>> predict_item(const ParamSet<float>& theta, const TestItem& item,
                                        const std::vector<double>& times) {
  const auto f0 = extract(theta, item.first);
  const auto f1 = extract(theta, item.last);
  std::vector<Tensor<float>> out;
  out.reserve(times.size());
  for (double t : times) out.push_back(interpolate(theta, f0, f1, t).reshaped(item.first.shape()));
  return out;
}

AdaptOutcome adapt_and_predict(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                               const std::vector<std::vector<double>>& item_times, bool adapt,
                               const AdaptationLog& log) {
  prepare(stream, cfg);
  std::vector<const TestItem*> items;
  for (const auto& b : stream.batches) {
    for (const auto& item : b.items) items.push_back(&item);
  }
  if (item_times.size() != items.size()) {
    throw ContractError("adapt_and_predict: " + std::to_string(item_times.size()) + " time lists for " +
                        std::to_string(items.size()) + " items");
  }

  AdaptOutcome out;
  const double start = cpu_seconds();
  std::vector<ParamSet<float>> thetas;  // parameters each batch is predicted with (empty: theta0)
  auto predict_batch = [&](std::size_t i, const ParamSet<float>& theta) {
    for (const auto& item : stream.batches[i].items) {
      const auto& times = item_times[out.predictions.size()];
      out.predictions.push_back({item.id, times, predict_item(theta, item, times)});
    }
  };

  try {
    if (!adapt) {
      for (std::size_t i = 0; i < stream.m(); ++i) predict_batch(i, theta0);
    } else if (cfg.scheme == Scheme::naive) {
      auto st = naive_ttt(theta0, stream, cfg, log);
      for (std::size_t i = 0; i < stream.m(); ++i) predict_batch(i, st.theta);
      out.loss_trace = std::move(st.loss_trace);
      thetas.assign(stream.m(), st.theta);
    } else if (cfg.scheme == Scheme::online) {
      // Adaptations are independent, so each batch is predicted as soon as it is done.
      for (std::size_t i = 0; i < stream.m(); ++i) {
        AdaptationState st{theta0, 0, {}, {}};
        Stepper stepper(theta0, cfg);
        adapt_batch(st, stepper, stream.batches[i], i, 0, cfg.ttt_epochs, cfg, log, start);
        predict_batch(i, st.theta);
        out.loss_trace.insert(out.loss_trace.end(), st.loss_trace.begin(), st.loss_trace.end());
        thetas.push_back(std::move(st.theta));
      }
    } else {
      AdaptationState st{theta0, 0, {}, {}};
      Stepper stepper(theta0, cfg);
      for (std::size_t i = 0; i < stream.m(); ++i) {
        adapt_batch(st, stepper, stream.batches[i], i, 0, cfg.ttt_epochs, cfg, log, start);
        predict_batch(i, st.theta);
        thetas.push_back(st.theta);
      }
      out.loss_trace = std::move(st.loss_trace);
    }
  } catch (const NumericalError& e) {
    out.fell_back = true;
    out.failure = e.what();
    out.loss_trace = e.loss_trace();
    out.predictions.clear();
    thetas.clear();
    for (std::size_t i = 0; i < stream.m(); ++i) predict_batch(i, theta0);
  }
  out.seconds_per_sample = (cpu_seconds() - start) / static_cast<double>(items.size());
  const auto h0 = param_hash(theta0);
  for (std::size_t i = 0; i < stream.m(); ++i) out.param_hashes.push_back(thetas.empty() ? h0 : param_hash(thetas[i]));
  return out;
}

std::vector<FrameResult> score(const AdaptOutcome& outcome, const TargetLoader& load) {
  std::vector<FrameResult> out;
  for (const auto& pred : outcome.predictions) {
    const auto truth = load(pred);
    if (truth.size() != pred.frames.size()) {
      throw ContractError("score: " + std::to_string(truth.size()) + " targets for " +
                          std::to_string(pred.frames.size()) + " predictions of " + pred.item_id);
    }
    for (std::size_t k = 0; k < truth.size(); ++k) {
      out.push_back({pred.item_id, pred.times[k], metrics::evaluate(pred.frames[k], truth[k])});
    }
  }
  return out;
}

template Tensor<float> ssl_inputs<float>(const TestBatch&);
template Tensor<double> ssl_inputs<double>(const TestBatch&);
template ag::NodeId ssl_objective<float>(ag::Graph<float>&, const ParamSet<float>&, const BoundParams&,
                                         const Tensor<float>&, Task, std::uint64_t, std::array<std::size_t, 3>,
                                         double);
template ag::NodeId ssl_objective<double>(ag::Graph<double>&, const ParamSet<double>&, const BoundParams&,
                                          const Tensor<double>&, Task, std::uint64_t, std::array<std::size_t, 3>,
                                          double);
template SslGrad<float> ssl_grad<float>(const ParamSet<float>&, const Tensor<float>&, const TTTConfig&, std::uint64_t,
                                        const std::vector<double>&);
template SslGrad<double> ssl_grad<double>(const ParamSet<double>&, const Tensor<double>&, const TTTConfig&,
                                          std::uint64_t, const std::vector<double>&);

}  // namespace ttvi
