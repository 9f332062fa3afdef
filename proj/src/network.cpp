#include "rseg/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace rseg {

void NetworkSpec::validate() const {
  if (in_channels < 1) throw ConfigError("network: in_channels must be >= 1");
  if (num_classes < 2 || num_classes > 255) throw ConfigError("network: num_classes must be in [2, 255]");
  if (base_width < 1) throw ConfigError("network: base_width must be >= 1");
  if (depth < 1 || depth > 8) throw ConfigError("network: depth must be in [1, 8]");
}

void NetworkSpec::check_resolution(Index height, Index width) const {
  const Index step = Index{1} << depth;
  if (height <= 0 || width <= 0 || height % step != 0 || width % step != 0)
    throw ShapeError("network: input " + std::to_string(height) + "x" + std::to_string(width) +
                     " not divisible by 2^" + std::to_string(depth));
}

std::string to_string(const NetworkSpec& spec) {
  std::ostringstream os;
  os << "in_channels=" << spec.in_channels << " num_classes=" << spec.num_classes
     << " base_width=" << spec.base_width << " depth=" << spec.depth << " seed=" << spec.seed;
  return os.str();
}

namespace {

struct ConvLayer {
  std::string name;
  Index in, out, ksize;
};

// Conv layers in execution order; see parameter_layout for the naming scheme.
std::vector<ConvLayer> conv_layers(const NetworkSpec& spec) {
  std::vector<ConvLayer> layers;
  const auto width_at = [&](int level) { return Index(spec.base_width) << level; };
  for (int i = 0; i < spec.depth; ++i) {
    const std::string prefix = "enc" + std::to_string(i);
    const Index in = i == 0 ? spec.in_channels : width_at(i - 1);
    layers.push_back({prefix + ".conv1", in, width_at(i), 3});
    layers.push_back({prefix + ".conv2", width_at(i), width_at(i), 3});
  }
  layers.push_back({"bottleneck.conv1", width_at(spec.depth - 1), width_at(spec.depth), 3});
  layers.push_back({"bottleneck.conv2", width_at(spec.depth), width_at(spec.depth), 3});
  for (int i = spec.depth - 1; i >= 0; --i) {
    const std::string prefix = "dec" + std::to_string(i);
    layers.push_back({prefix + ".conv1", width_at(i + 1) + width_at(i), width_at(i), 3});
    layers.push_back({prefix + ".conv2", width_at(i), width_at(i), 3});
  }
  layers.push_back({"head", width_at(0), spec.num_classes, 1});
  return layers;
}

// Layer indices into conv_layers().
std::size_t enc_layer(int level, int conv) { return std::size_t(2 * level + conv); }
std::size_t bottleneck_layer(int depth, int conv) { return std::size_t(2 * depth + conv); }
std::size_t dec_layer(int depth, int level, int conv) { return std::size_t(2 * depth + 2 + 2 * (depth - 1 - level) + conv); }
std::size_t head_layer(int depth) { return std::size_t(4 * depth + 2); }

}  // namespace

std::vector<ParameterShape> parameter_layout(const NetworkSpec& spec) {
  spec.validate();
  std::vector<ParameterShape> layout;
  for (const ConvLayer& l : conv_layers(spec)) {
    layout.push_back({l.name + ".weight", {l.out, l.in, l.ksize, l.ksize}});
    layout.push_back({l.name + ".bias", {l.out}});
  }
  return layout;
}

template <typename Scalar>
BasicParameterSet<Scalar>::BasicParameterSet(NetworkSpec spec, std::vector<NamedTensor<Scalar>> tensors)
    : spec_(spec), tensors_(std::move(tensors)) {
  const auto layout = parameter_layout(spec_);
  if (layout.size() != tensors_.size())
    throw ShapeError("parameter set has " + std::to_string(tensors_.size()) + " tensors, spec needs " +
                     std::to_string(layout.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (tensors_[i].name != layout[i].name)
      throw ShapeError("parameter " + std::to_string(i) + " is '" + tensors_[i].name + "', expected '" +
                       layout[i].name + "'");
    if (tensors_[i].value.shape() != layout[i].shape)
      throw ShapeError("parameter '" + layout[i].name + "' has shape " + shape_string(tensors_[i].value.shape()) +
                       ", expected " + shape_string(layout[i].shape));
  }
}

template <typename Scalar>
BasicParameterSet<Scalar> BasicParameterSet<Scalar>::Zero(const NetworkSpec& spec) {
  std::vector<NamedTensor<Scalar>> tensors;
  for (auto& p : parameter_layout(spec)) tensors.push_back({p.name, BasicTensor<Scalar>(p.shape)});
  return BasicParameterSet(spec, std::move(tensors));
}

template <typename Scalar>
Index BasicParameterSet<Scalar>::parameter_count() const {
  Index total = 0;
  for (const auto& t : tensors_) total += t.value.size();
  return total;
}

template <typename Scalar>
const BasicTensor<Scalar>& BasicParameterSet<Scalar>::at(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t.value;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

ParameterSet build_and_init(const NetworkSpec& spec) {
  ParameterSet params = ParameterSet::Zero(spec);
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& entry : params) {
    if (entry.value.rank() != 4) continue;
    const Shape& s = entry.value.shape();
    const double stddev = std::sqrt(2.0 / double(s[1] * s[2] * s[3]));
    for (Index i = 0; i < entry.value.size(); ++i) entry.value[i] = float(stddev * normal(rng));
  }
  return params;
}

template <typename Scalar>
ForwardCache<Scalar> forward_cached(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images) {
  const NetworkSpec& spec = params.spec();
  require_rank(images.shape(), 4, "network forward");
  if (images.dim(1) != spec.in_channels)
    throw ShapeError("network forward: images have " + std::to_string(images.dim(1)) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  spec.check_resolution(images.dim(2), images.dim(3));

  const std::size_t n_layers = head_layer(spec.depth) + 1;
  ForwardCache<Scalar> cache;
  cache.conv_inputs.resize(n_layers);
  cache.conv_outputs.resize(n_layers);

  auto conv_relu = [&](std::size_t layer, BasicTensor<Scalar> x) {
    const auto& weight = params[2 * layer].value;
    const auto& bias = params[2 * layer + 1].value;
    cache.conv_outputs[layer] = relu_forward(conv2d_forward(x, weight, bias, 1, 1));
    cache.conv_inputs[layer] = std::move(x);
    return cache.conv_outputs[layer];
  };

  BasicTensor<Scalar> x = images;
  for (int i = 0; i < spec.depth; ++i) {
    x = conv_relu(enc_layer(i, 0), std::move(x));
    x = downsample2x(conv_relu(enc_layer(i, 1), std::move(x)));
  }
  x = conv_relu(bottleneck_layer(spec.depth, 0), std::move(x));
  x = conv_relu(bottleneck_layer(spec.depth, 1), std::move(x));
  for (int i = spec.depth - 1; i >= 0; --i) {
    x = concat_channels(upsample2x(x), cache.conv_outputs[enc_layer(i, 1)]);
    x = conv_relu(dec_layer(spec.depth, i, 0), std::move(x));
    x = conv_relu(dec_layer(spec.depth, i, 1), std::move(x));
  }
  const std::size_t head = head_layer(spec.depth);
  cache.logits = conv2d_forward(x, params[2 * head].value, params[2 * head + 1].value, 1, 0);
  cache.conv_inputs[head] = std::move(x);
  return cache;
}

template <typename Scalar>
BasicTensor<Scalar> forward(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images) {
  return forward_cached(params, images).logits;
}

template <typename Scalar>
BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>& params, const ForwardCache<Scalar>& cache,
                                   const BasicTensor<Scalar>& grad_logits) {
  const NetworkSpec& spec = params.spec();
  if (grad_logits.shape() != cache.logits.shape())
    throw ShapeError("network backward: grad_logits " + shape_string(grad_logits.shape()) + " vs logits " +
                     shape_string(cache.logits.shape()));
  BasicParameterSet<Scalar> grads = BasicParameterSet<Scalar>::Zero(spec);

  auto conv_back = [&](std::size_t layer, const BasicTensor<Scalar>& upstream, Index padding) {
    auto g = conv2d_backward(cache.conv_inputs[layer], params[2 * layer].value, upstream, 1, padding);
    grads[2 * layer].value = std::move(g.grad_kernel);
    grads[2 * layer + 1].value = std::move(g.grad_bias);
    return std::move(g.grad_input);
  };
  auto conv_relu_back = [&](std::size_t layer, const BasicTensor<Scalar>& upstream) {
    return conv_back(layer, relu_backward(cache.conv_outputs[layer], upstream), 1);
  };

  BasicTensor<Scalar> g = conv_back(head_layer(spec.depth), grad_logits, 0);
  std::vector<BasicTensor<Scalar>> skip_grads(std::size_t(spec.depth));
  for (int i = 0; i < spec.depth; ++i) {
    g = conv_relu_back(dec_layer(spec.depth, i, 1), g);
    g = conv_relu_back(dec_layer(spec.depth, i, 0), g);
    const Index up_channels = Index(spec.base_width) << (i + 1);
    auto [grad_up, grad_skip] = split_channels(g, up_channels);
    skip_grads[std::size_t(i)] = std::move(grad_skip);
    g = upsample2x_backward(grad_up);
  }
  g = conv_relu_back(bottleneck_layer(spec.depth, 1), g);
  g = conv_relu_back(bottleneck_layer(spec.depth, 0), g);
  for (int i = spec.depth - 1; i >= 0; --i) {
    const std::size_t conv2 = enc_layer(i, 1);
    g = downsample2x_backward(cache.conv_outputs[conv2], g);
    g.vec() += skip_grads[std::size_t(i)].vec();
    g = conv_relu_back(conv2, g);
    g = conv_relu_back(enc_layer(i, 0), g);
  }
  return grads;
}

template <typename Scalar>
BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>& params, const BasicTensor<Scalar>& images,
                                   const BasicTensor<Scalar>& grad_logits) {
  return backward(params, forward_cached(params, images), grad_logits);
}

#define RSEG_INSTANTIATE_NETWORK(Scalar)                                                                     \
  template class BasicParameterSet<Scalar>;                                                                  \
  template ForwardCache<Scalar> forward_cached(const BasicParameterSet<Scalar>&, const BasicTensor<Scalar>&); \
  template BasicTensor<Scalar> forward(const BasicParameterSet<Scalar>&, const BasicTensor<Scalar>&);         \
  template BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>&, const ForwardCache<Scalar>&,  \
                                              const BasicTensor<Scalar>&);                                   \
  template BasicParameterSet<Scalar> backward(const BasicParameterSet<Scalar>&, const BasicTensor<Scalar>&,   \
                                              const BasicTensor<Scalar>&);

RSEG_INSTANTIATE_NETWORK(float)
RSEG_INSTANTIATE_NETWORK(double)

#undef RSEG_INSTANTIATE_NETWORK

}  // namespace rseg
