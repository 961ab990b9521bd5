#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "loft/nn/ops.hpp"
#include "loft/nn/tensor.hpp"
#include "loft/rng.hpp"

namespace loft::nn {

enum class LayerKind { conv2d, dense, dropout, activation, flatten, reshape, upsample };

/// One layer of a sequential network. Only the fields of its kind are read.
struct LayerSpec {
  LayerKind kind = LayerKind::activation;
  std::string name;
  std::size_t filters = 0;  // conv2d
  std::size_t kernel = 0;   // conv2d, odd
  std::size_t stride = 1;   // conv2d
  Padding padding = Padding::same;
  std::size_t units = 0;    // dense
  double rate = 0.0;        // dropout, [0, 1)
  Activation activation = Activation::identity;
  Shape target;             // reshape: per-sample shape; upsample: {h, w}

  static LayerSpec conv(std::string name, std::size_t filters, std::size_t kernel, std::size_t stride,
                        Padding padding = Padding::same);
  static LayerSpec dense(std::string name, std::size_t units);
  static LayerSpec dropout(std::string name, double rate);
  static LayerSpec act(std::string name, Activation a);
  static LayerSpec flatten(std::string name);
  static LayerSpec reshape(std::string name, Shape per_sample);
  static LayerSpec upsample(std::string name, std::size_t h, std::size_t w);

  void validate() const;
};

struct Param {
  Tensor value;
  Tensor grad;
  bool has_grad = false;
};

/// Named parameters with matching gradient buffers. Iteration order is lexicographic by name.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& value(const std::string& name) const;
  Tensor& value(const std::string& name);
  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);

  /// Stores a gradient; its shape must equal the parameter's shape.
  void set_grad(const std::string& name, Tensor grad);
  void clear_grads();

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t parameter_count() const;
  double squared_norm() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Compares names and values bit-for-bit (gradients are ignored).
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Param> params_;
};

using Gradients = std::map<std::string, Tensor>;

void accumulate(Gradients& grads, const std::string& name, const Tensor& g);
void accumulate(Gradients& into, const Gradients& from, double scale);

struct LayerCache {
  Tensor input;
  Tensor aux;
  Shape in_shape;
};

/// Per-call forward trace, needed for the matching backward call.
struct Pass {
  std::vector<LayerCache> layers;
};

/// A feed-forward stack of layers. Parameter names are "<prefix>/<layer>/w" and "<prefix>/<layer>/b".
/// Inputs are batched: [B, ...input_shape].
class Network {
 public:
  Network() = default;
  Network(std::string prefix, Shape input_shape, std::vector<LayerSpec> layers);

  /// Glorot-uniform weights, limit sqrt(6 / (fan_in + fan_out)); zero biases.
  void init_params(ParamStore& store, Rng& rng) const;

  Tensor forward(const ParamStore& params, const Tensor& x, bool train, Rng* rng, Pass* pass) const;

  /// Propagates dy back through the trace. Parameter gradients are added to *grads when it is
  /// non-null. Returns dL/dx, or an empty tensor when need_dx is false.
  Tensor backward(const ParamStore& params, const Pass& pass, const Tensor& dy, Gradients* grads,
                  bool need_dx = true) const;

  const std::string& prefix() const noexcept { return prefix_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const noexcept { return shapes_.back(); }
  /// shapes()[i] is the per-sample output of layer i - 1; shapes()[0] is the input.
  const std::vector<Shape>& shapes() const noexcept { return shapes_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::vector<std::string> param_names() const;

 private:
  std::string weight_name(const LayerSpec& l) const { return prefix_ + "/" + l.name + "/w"; }
  std::string bias_name(const LayerSpec& l) const { return prefix_ + "/" + l.name + "/b"; }

  std::string prefix_;
  Shape input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
};

}  // namespace loft::nn
