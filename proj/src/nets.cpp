#include "ttvi/nets.hpp"

#include <cmath>
#include <random>

namespace ttvi {

namespace {

using std::size_t;

template <typename T>
void push_conv(std::vector<NamedTensor<T>>& out, std::string_view prefix, std::string_view stage,
               Partition part, size_t in, size_t filters) {
  const std::string base = std::string(prefix) + "." + std::string(stage);
  out.push_back({base + ".weight", part, Tensor<T>({filters, in, 3, 3, 3})});
  out.push_back({base + ".bias", part, Tensor<T>({filters})});
}

template <typename T>
void push_dense(std::vector<NamedTensor<T>>& out, std::string_view name, Partition part, size_t in,
                size_t units) {
  out.push_back({std::string(name) + ".weight", part, Tensor<T>({in, units})});
  out.push_back({std::string(name) + ".bias", part, Tensor<T>({units})});
}

template <typename T>
ag::NodeId conv_block(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound, ag::NodeId x,
                      const std::string& base, bool activate) {
  const auto w = bound.ids[params.index_of(base + ".weight")];
  const auto b = bound.ids[params.index_of(base + ".bias")];
  auto y = ag::bias_add(g, ag::conv3d(g, x, w, 1, 1), b);
  return activate ? ag::relu(g, y) : y;
}

template <typename T>
ag::NodeId decode(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound, ag::NodeId x,
                  std::string_view prefix, size_t stages) {
  for (size_t i = 0; i < stages; ++i) {
    x = params.arch().trilinear_upsampling ? ag::upsample_trilinear(g, x) : ag::upsample_nearest(g, x);
    x = conv_block(g, params, bound, x, std::string(prefix) + ".conv" + std::to_string(i + 1), true);
  }
  return conv_block(g, params, bound, x, std::string(prefix) + ".out", false);
}

}  // namespace

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::extractor: return "f";
    case Partition::interpolator: return "h";
    case Partition::rotation_head: return "g_rot";
    case Partition::mae_head: return "g_mae";
  }
  return "?";
}

Partition parse_partition(std::string_view name) {
  for (auto p : kAllPartitions) {
    if (partition_name(p) == name) return p;
  }
  throw ContractError("unknown partition '" + std::string(name) + "'");
}

std::array<std::size_t, 3> ArchConfig::feature_extent() const {
  const size_t f = size_t{1} << pooled_stages;
  return {volume[0] / f, volume[1] / f, volume[2] / f};
}

Shape ArchConfig::feature_shape(std::size_t batch) const {
  const auto e = feature_extent();
  return {batch, feature_channels(), e[0], e[1], e[2]};
}

void ArchConfig::validate() const {
  if (extractor_channels.empty()) throw ContractError("arch: extractor needs at least one stage");
  if (pooled_stages > extractor_channels.size()) throw ContractError("arch: more pools than stages");
  if (interp_channels.size() != pooled_stages || mae_channels.size() != pooled_stages) {
    throw ContractError("arch: decoder depth must equal the number of pooled stages (" +
                        std::to_string(pooled_stages) + ")");
  }
  const size_t f = size_t{1} << pooled_stages;
  for (size_t a = 0; a < 3; ++a) {
    if (volume[a] == 0 || volume[a] % f != 0) {
      throw ContractError("arch: volume extent " + std::to_string(volume[a]) + " not divisible by " +
                          std::to_string(f));
    }
  }
}

template <typename T>
ParamSet<T>::ParamSet(ArchConfig arch, std::vector<NamedTensor<T>> tensors)
    : arch_(std::move(arch)), tensors_(std::move(tensors)) {
  frozen_.fill(false);
}

template <typename T>
std::optional<std::size_t> ParamSet<T>::find(std::string_view name) const {
  for (size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return std::nullopt;
}

template <typename T>
std::size_t ParamSet<T>::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ContractError("parameter '" + std::string(name) + "' not in parameter set");
}

template <typename T>
std::size_t ParamSet<T>::scalar_count() const {
  size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

template <typename T>
std::size_t ParamSet<T>::scalar_count(Partition p) const {
  size_t n = 0;
  for (const auto& t : tensors_) {
    if (t.partition == p) n += t.value.size();
  }
  return n;
}

template <typename T>
ParamSet<T> init_params(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  std::vector<NamedTensor<T>> t;
  size_t in = 1;
  for (size_t i = 0; i < arch.extractor_channels.size(); ++i) {
    push_conv(t, "f", "conv" + std::to_string(i + 1), Partition::extractor, in, arch.extractor_channels[i]);
    in = arch.extractor_channels[i];
  }
  const size_t feat = arch.feature_channels();

  in = 2 * feat + 1;
  for (size_t i = 0; i < arch.interp_channels.size(); ++i) {
    push_conv(t, "h", "conv" + std::to_string(i + 1), Partition::interpolator, in, arch.interp_channels[i]);
    in = arch.interp_channels[i];
  }
  push_conv(t, "h", "out", Partition::interpolator, in, 1);

  push_dense(t, "g_rot.fc1", Partition::rotation_head, feat, arch.rotation_hidden);
  push_dense(t, "g_rot.fc2", Partition::rotation_head, arch.rotation_hidden, 4);

  in = feat;
  for (size_t i = 0; i < arch.mae_channels.size(); ++i) {
    push_conv(t, "g_mae", "conv" + std::to_string(i + 1), Partition::mae_head, in, arch.mae_channels[i]);
    in = arch.mae_channels[i];
  }
  push_conv(t, "g_mae", "out", Partition::mae_head, in, 1);

  std::mt19937_64 rng(seed);
  for (auto& nt : t) {
    const bool is_bias = nt.value.rank() == 1;
    if (is_bias || nt.name == "h.out.weight") continue;  // zero
    const size_t fan_in = nt.value.rank() == 5 ? nt.value.size() / nt.value.dim(0) : nt.value.dim(0);
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(static_cast<double>(fan_in)),
                                                1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (auto& v : nt.value.data()) v = static_cast<T>(dist(rng));
  }
  return ParamSet<T>(arch, std::move(t));
}

template <typename T>
BoundParams bind(ag::Graph<T>& g, const ParamSet<T>& params, std::array<bool, 4> trainable) {
  BoundParams b;
  b.ids.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    const bool train = trainable[static_cast<size_t>(params[i].partition)];
    b.ids.push_back(train ? g.variable(params.value(i)) : g.constant(params.value(i)));
    b.trainable.push_back(train);
  }
  return b;
}

namespace net {

template <typename T>
ag::NodeId extract(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound, ag::NodeId volume) {
  const auto& arch = params.arch();
  const Shape& s = g.value(volume).shape();
  if (s.size() != 5 || s[1] != 1 || s[2] != arch.volume[0] || s[3] != arch.volume[1] || s[4] != arch.volume[2]) {
    throw ShapeError("extract: expected [N,1," + std::to_string(arch.volume[0]) + "," +
                     std::to_string(arch.volume[1]) + "," + std::to_string(arch.volume[2]) + "], got " +
                     to_string(s));
  }
  ag::NodeId x = volume;
  for (size_t i = 0; i < arch.extractor_channels.size(); ++i) {
    x = conv_block(g, params, bound, x, "f.conv" + std::to_string(i + 1), true);
    if (i < arch.pooled_stages) x = ag::max_pool3d(g, x);
  }
  return x;
}

template <typename T>
ag::NodeId interpolate(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                       ag::NodeId feat0, ag::NodeId feat1, ag::NodeId base, T t) {
  const Shape& fs = g.value(feat0).shape();
  require_same_shape(fs, g.value(feat1).shape(), "interpolate features");
  if (fs != params.arch().feature_shape(fs.at(0))) {
    throw ShapeError("interpolate: features " + to_string(fs) + " do not match extractor output " +
                     to_string(params.arch().feature_shape(fs.at(0))));
  }
  Shape tshape = fs;
  tshape[1] = 1;
  const auto tchan = g.constant(Tensor<T>(tshape, t));
  const std::array<ag::NodeId, 3> parts{feat0, feat1, tchan};
  auto x = ag::concat<T>(g, parts, 1);
  auto residual = decode(g, params, bound, x, "h", params.arch().interp_channels.size());
  require_same_shape(g.value(residual).shape(), g.value(base).shape(), "interpolate residual");
  return ag::add(g, base, residual);
}

template <typename T>
ag::NodeId rotation_logits(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                           ag::NodeId features) {
  auto pooled = ag::global_avg_pool(g, features);
  auto hidden = ag::relu(g, ag::dense(g, pooled, bound.ids[params.index_of("g_rot.fc1.weight")],
                                      bound.ids[params.index_of("g_rot.fc1.bias")]));
  return ag::dense(g, hidden, bound.ids[params.index_of("g_rot.fc2.weight")],
                   bound.ids[params.index_of("g_rot.fc2.bias")]);
}

template <typename T>
ag::NodeId reconstruct(ag::Graph<T>& g, const ParamSet<T>& params, const BoundParams& bound,
                       ag::NodeId features) {
  const Shape& fs = g.value(features).shape();
  if (fs.size() != 5 || fs != params.arch().feature_shape(fs[0])) {
    throw ShapeError("reconstruct: features " + to_string(fs) + " do not match extractor output");
  }
  return decode(g, params, bound, features, "g_mae", params.arch().mae_channels.size());
}

}  // namespace net

template <typename T>
Tensor<T> as_network_input(const ArchConfig& arch, const Tensor<T>& volume) {
  const Shape& s = volume.shape();
  Shape want{1, 1, arch.volume[0], arch.volume[1], arch.volume[2]};
  if (s.size() == 3 && Shape{s[0], s[1], s[2]} == Shape{want[2], want[3], want[4]}) return volume.reshaped(want);
  if (s.size() == 5 && s[1] == 1 && s[2] == want[2] && s[3] == want[3] && s[4] == want[4]) return volume;
  throw ShapeError("network input " + to_string(s) + " does not match configured volume " +
                   to_string(Shape{want[2], want[3], want[4]}));
}

template <typename T>
FeatureMap<T> extract(const ParamSet<T>& params, const Tensor<T>& volume) {
  Tensor<T> x = as_network_input(params.arch(), volume);
  ag::Graph<T> g;
  const auto bound = bind(g, params, {});
  const auto out = net::extract(g, params, bound, g.constant(x));
  return {g.value(out), std::move(x)};
}

template <typename T>
Tensor<T> interpolate(const ParamSet<T>& params, const FeatureMap<T>& feat0, const FeatureMap<T>& feat1,
                      double t) {
  if (!(t > 0.0 && t < 1.0)) throw DomainError("interpolate: t must lie in (0,1), got " + std::to_string(t));
  require_same_shape(feat0.source.shape(), feat1.source.shape(), "interpolate sources");
  Tensor<T> base(feat0.source.shape());
  const T b = static_cast<T>(t);
  for (size_t i = 0; i < base.size(); ++i) base[i] = feat0.source[i] + b * (feat1.source[i] - feat0.source[i]);
  ag::Graph<T> g;
  const auto bound = bind(g, params, {});
  const auto out = net::interpolate(g, params, bound, g.constant(feat0.features), g.constant(feat1.features),
                                    g.constant(std::move(base)), static_cast<T>(t));
  return g.value(out);
}

template <typename T>
Tensor<T> predict_rotation(const ParamSet<T>& params, const FeatureMap<T>& feat) {
  ag::Graph<T> g;
  const auto bound = bind(g, params, {});
  return g.value(net::rotation_logits(g, params, bound, g.constant(feat.features)));
}

template <typename T>
Tensor<T> reconstruct(const ParamSet<T>& params, const FeatureMap<T>& feat_of_masked) {
  ag::Graph<T> g;
  const auto bound = bind(g, params, {});
  return g.value(net::reconstruct(g, params, bound, g.constant(feat_of_masked.features)));
}

#define TTVI_INSTANTIATE_NETS(T)                                                                       \
  template class ParamSet<T>;                                                                          \
  template ParamSet<T> init_params<T>(const ArchConfig&, std::uint64_t);                               \
  template BoundParams bind<T>(ag::Graph<T>&, const ParamSet<T>&, std::array<bool, 4>);                \
  template ag::NodeId net::extract<T>(ag::Graph<T>&, const ParamSet<T>&, const BoundParams&, ag::NodeId); \
  template ag::NodeId net::interpolate<T>(ag::Graph<T>&, const ParamSet<T>&, const BoundParams&,       \
                                          ag::NodeId, ag::NodeId, ag::NodeId, T);                      \
  template ag::NodeId net::rotation_logits<T>(ag::Graph<T>&, const ParamSet<T>&, const BoundParams&,   \
                                              ag::NodeId);                                             \
  template ag::NodeId net::reconstruct<T>(ag::Graph<T>&, const ParamSet<T>&, const BoundParams&,       \
                                          ag::NodeId);                                                 \
  template Tensor<T> as_network_input<T>(const ArchConfig&, const Tensor<T>&);                         \
  template FeatureMap<T> extract<T>(const ParamSet<T>&, const Tensor<T>&);                             \
  template Tensor<T> interpolate<T>(const ParamSet<T>&, const FeatureMap<T>&, const FeatureMap<T>&,    \
                                    double);                                                           \
  template Tensor<T> predict_rotation<T>(const ParamSet<T>&, const FeatureMap<T>&);                    \
  template Tensor<T> reconstruct<T>(const ParamSet<T>&, const FeatureMap<T>&);

TTVI_INSTANTIATE_NETS(float)
TTVI_INSTANTIATE_NETS(double)

#undef TTVI_INSTANTIATE_NETS

}  // namespace ttvi
