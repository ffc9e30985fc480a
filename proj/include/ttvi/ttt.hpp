#pragma once

// Test-time training: self-supervised gradients on unlabeled test inputs and
// the three adaptation schemes.
//
//   naive      E passes over b_1..b_m, one step per batch; one final theta
//              serves every prediction.
//   online     each b_i starts from a fresh copy of theta_0 and takes E steps.
//   minibatch  b_i starts where b_{i-1} stopped and takes E steps.
//
// All randomness (rotation labels, masks) is drawn from a counter-based seed
// keyed on (cfg.seed, batch identity, step), so a batch sees the same pretext
// instances regardless of scheme, stream position or neighbouring batches.

#include <array>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ttvi/metrics.hpp"
#include "ttvi/nets.hpp"
#include "ttvi/optim.hpp"
#include "ttvi/ssl.hpp"

namespace ttvi {

enum class Scheme { naive, online, minibatch };
enum class Task { rotation, mae };

inline constexpr std::array<Scheme, 3> kAllSchemes{Scheme::naive, Scheme::online, Scheme::minibatch};
inline constexpr std::array<Task, 2> kAllTasks{Task::rotation, Task::mae};

std::string scheme_name(Scheme s);
Scheme parse_scheme(const std::string& name);
std::string task_name(Task t);
Task parse_task(const std::string& name);
Partition task_head(Task t);

enum class Optimizer { sgd, adam };

struct TTTConfig {
  Scheme scheme = Scheme::minibatch;
  Task task = Task::rotation;
  double eta = 2e-4;
  std::size_t ttt_epochs = 50;  // naive: passes over the stream; online/minibatch: steps per batch
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::array<bool, 4> freeze{false, true, false, false};  // indexed by Partition; h frozen
  Optimizer optimizer = Optimizer::sgd;
  std::array<std::size_t, 3> mask_patch{8, 8, 8};
  double mask_ratio = 0.8;

  bool frozen(Partition p) const { return freeze[static_cast<std::size_t>(p)]; }
  void validate() const;  // throws DomainError
};

/// One unlabeled test sequence: only its two endpoint frames are visible.
struct TestItem {
  std::string id;
  Tensor<float> first;  // [D, H, W]
  Tensor<float> last;
};

struct TestBatch {
  std::vector<TestItem> items;
  std::uint64_t key() const;  // stable identity derived from the item ids
};

struct TestStream {
  std::vector<TestBatch> batches;
  std::size_t m() const { return batches.size(); }
  void validate() const;  // throws ContractError on an empty stream or batch
};

/// Groups items into consecutive batches of `batch_size` (the last may be short).
TestStream make_stream(std::vector<TestItem> items, std::size_t batch_size);

/// The volumes a batch exposes to the pretext task, stacked as [N, 1, D, H, W].
template <typename T>
Tensor<T> ssl_inputs(const TestBatch& batch);

/// Builds the pretext loss for `inputs` in `g`. `instance_seed` fixes the
/// rotation labels or mask.
template <typename T>
ag::NodeId ssl_objective(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                         const Tensor<T>& inputs, Task task, std::uint64_t instance_seed,
                         std::array<std::size_t, 3> mask_patch, double mask_ratio);

/// Seed of the pretext instance used for `batch` at `step`.
std::uint64_t instance_seed(std::uint64_t seed, Task task, std::uint64_t batch_key, std::size_t step);

template <typename T>
struct SslGrad {
  double loss = 0.0;
  GradMap<T> grads;  // only unfrozen partitions
};

/// Pretext loss and its gradient with respect to unfrozen parameters. A
/// non-finite loss throws NumericalError carrying `trace` plus the bad value.
template <typename T>
SslGrad<T> ssl_grad(const ParamSet<T>& theta, const Tensor<T>& inputs, const TTTConfig& cfg,
                    std::uint64_t instance, const std::vector<double>& trace = {});

/// One JSON line per optimizer step.
struct AdaptationLog {
  std::ostream* out = nullptr;
  void record(Scheme scheme, Task task, std::size_t batch_index, std::size_t step, double loss,
              double elapsed_s) const;
};

struct AdaptationState {
  ParamSet<float> theta;
  std::size_t step_count = 0;
  std::vector<double> per_batch_seconds;
  std::vector<double> loss_trace;
};

AdaptationState naive_ttt(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                          const AdaptationLog& log = {});
/// One independent state per batch, in stream order.
std::vector<AdaptationState> online_ttt(const ParamSet<float>& theta0, const TestStream& stream,
                                        const TTTConfig& cfg, const AdaptationLog& log = {});
/// Final state after the whole stream; `per_batch` (if given) receives theta_i
/// after each batch.
AdaptationState minibatch_ttt(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                              const AdaptationLog& log = {}, std::vector<ParamSet<float>>* per_batch = nullptr);

/// Predicted interior frames for one test item.
struct ItemPrediction {
  std::string item_id;
  std::vector<double> times;
  std::vector<Tensor<float>> frames;
};

struct AdaptOutcome {
  std::vector<ItemPrediction> predictions;   // stream order
  std::vector<std::uint64_t> param_hashes;   // parameters used for each batch
  double seconds_per_sample = 0.0;           // process CPU time of adaptation + prediction / items
  std::vector<double> loss_trace;
  bool fell_back = false;  // a non-finite loss aborted adaptation; theta_0 was used
  std::string failure;
};

/// Runs the configured scheme (or, with `adapt == false`, plain theta_0) and
/// predicts each item at `item_times[k]` with the parameters the scheme assigns
/// to its batch. Ground truth never enters this function.
AdaptOutcome adapt_and_predict(const ParamSet<float>& theta0, const TestStream& stream, const TTTConfig& cfg,
                               const std::vector<std::vector<double>>& item_times, bool adapt = true,
                               const AdaptationLog& log = {});

/// Ground truth frames for one item, aligned with its prediction times.
using TargetLoader = std::function<std::vector<Tensor<float>>(const ItemPrediction&)>;

struct FrameResult {
  std::string item_id;
  double t = 0.0;
  metrics::MetricReport report;
};

/// Scores predictions; `load` is called once per item, in stream order.
std::vector<FrameResult> score(const AdaptOutcome& outcome, const TargetLoader& load);

/// Interpolated frames for one item with fixed parameters.
std::vector<Tensor<float>> predict_item(const ParamSet<float>& theta, const TestItem& item,
                                        const std::vector<double>& times);

/// Process CPU seconds since an arbitrary origin.
double cpu_seconds();

}  // namespace ttvi
