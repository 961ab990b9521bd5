#include "loft/nn/network.hpp"

#include <cmath>
#include <stdexcept>

#include "loft/error.hpp"

namespace loft::nn {

LayerSpec LayerSpec::conv(std::string name, std::size_t filters, std::size_t kernel, std::size_t stride,
                          Padding padding) {
  LayerSpec l;
  l.kind = LayerKind::conv2d;
  l.name = std::move(name);
  l.filters = filters;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::dense(std::string name, std::size_t units) {
  LayerSpec l;
  l.kind = LayerKind::dense;
  l.name = std::move(name);
  l.units = units;
  return l;
}

LayerSpec LayerSpec::dropout(std::string name, double rate) {
  LayerSpec l;
  l.kind = LayerKind::dropout;
  l.name = std::move(name);
  l.rate = rate;
  return l;
}

LayerSpec LayerSpec::act(std::string name, Activation a) {
  LayerSpec l;
  l.kind = LayerKind::activation;
  l.name = std::move(name);
  l.activation = a;
  return l;
}

LayerSpec LayerSpec::flatten(std::string name) {
  LayerSpec l;
  l.kind = LayerKind::flatten;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::reshape(std::string name, Shape per_sample) {
  LayerSpec l;
  l.kind = LayerKind::reshape;
  l.name = std::move(name);
  l.target = std::move(per_sample);
  return l;
}

LayerSpec LayerSpec::upsample(std::string name, std::size_t h, std::size_t w) {
  LayerSpec l;
  l.kind = LayerKind::upsample;
  l.name = std::move(name);
  l.target = {h, w};
  return l;
}

void LayerSpec::validate() const {
  switch (kind) {
    case LayerKind::conv2d:
      if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument(name + ": conv kernel must be odd");
      if (stride == 0) throw std::invalid_argument(name + ": stride must be >= 1");
      if (filters == 0) throw std::invalid_argument(name + ": filters must be >= 1");
      break;
    case LayerKind::dense:
      if (units == 0) throw std::invalid_argument(name + ": units must be >= 1");
      break;
    case LayerKind::dropout:
      if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument(name + ": dropout rate must lie in [0, 1)");
      break;
    case LayerKind::upsample:
      if (target.size() != 2 || target[0] == 0 || target[1] == 0) {
        throw std::invalid_argument(name + ": upsample needs a positive {h, w}");
      }
      break;
    default:
      break;
  }
}

// ParamStore -----------------------------------------------------------------

void ParamStore::add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
  Param p;
  p.grad = Tensor(value.shape());
  p.value = std::move(value);
  params_.emplace(name, std::move(p));
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::value(const std::string& name) const { return at(name).value; }
Tensor& ParamStore::value(const std::string& name) { return at(name).value; }

void ParamStore::set_grad(const std::string& name, Tensor grad) {
  Param& p = at(name);
  require_same_shape(p.value, grad, "gradient for " + name);
  p.grad = std::move(grad);
  p.has_grad = true;
}

void ParamStore::clear_grads() {
  for (auto& [_, p] : params_) {
    p.grad.fill(0.0);
    p.has_grad = false;
  }
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

double ParamStore::squared_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_) s += p.value.squared_norm();
  return s;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b) {
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  }
  return true;
}

void accumulate(Gradients& grads, const std::string& name, const Tensor& g) {
  auto it = grads.find(name);
  if (it == grads.end()) {
    grads.emplace(name, g);
  } else {
    it->second += g;
  }
}

void accumulate(Gradients& into, const Gradients& from, double scale) {
  for (const auto& [name, g] : from) {
    Tensor scaled = g;
    scaled *= scale;
    accumulate(into, name, scaled);
  }
}

// Network --------------------------------------------------------------------

Network::Network(std::string prefix, Shape input_shape, std::vector<LayerSpec> layers)
    : prefix_(std::move(prefix)), input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  shapes_.push_back(input_shape_);
  for (const auto& l : layers_) {
    l.validate();
    const Shape& in = shapes_.back();
    Shape out;
    switch (l.kind) {
      case LayerKind::conv2d: {
        if (in.size() != 3) throw ShapeError(l.name + ": conv2d expects HWC input, got " + shape_string(in));
        const ConvGeometry g = conv_geometry(in[0], in[1], l.kernel, l.stride, l.padding);
        out = {g.out_h, g.out_w, l.filters};
        break;
      }
      case LayerKind::dense:
        if (in.size() != 1) throw ShapeError(l.name + ": dense expects flat input, got " + shape_string(in));
        out = {l.units};
        break;
      case LayerKind::flatten:
        out = {shape_size(in)};
        break;
      case LayerKind::reshape:
        if (shape_size(l.target) != shape_size(in)) {
          throw ShapeError(l.name + ": cannot reshape " + shape_string(in) + " to " + shape_string(l.target));
        }
        out = l.target;
        break;
      case LayerKind::upsample:
        if (in.size() != 3) throw ShapeError(l.name + ": upsample expects HWC input");
        out = {l.target[0], l.target[1], in[2]};
        break;
      default:
        out = in;
        break;
    }
    shapes_.push_back(std::move(out));
  }
}

void Network::init_params(ParamStore& store, Rng& rng) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const Shape& in = shapes_[i];
    Shape wshape;
    double fan_in = 0.0, fan_out = 0.0;
    std::size_t out_features = 0;
    if (l.kind == LayerKind::conv2d) {
      wshape = {l.kernel, l.kernel, in[2], l.filters};
      fan_in = static_cast<double>(l.kernel * l.kernel * in[2]);
      fan_out = static_cast<double>(l.kernel * l.kernel * l.filters);
      out_features = l.filters;
    } else if (l.kind == LayerKind::dense) {
      wshape = {in[0], l.units};
      fan_in = static_cast<double>(in[0]);
      fan_out = static_cast<double>(l.units);
      out_features = l.units;
    } else {
      continue;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor w(wshape);
    for (double& v : w.data()) v = (2.0 * rng.uniform() - 1.0) * limit;
    store.add(weight_name(l), std::move(w));
    store.add(bias_name(l), Tensor({out_features}));
  }
}

std::vector<std::string> Network::param_names() const {
  std::vector<std::string> names;
  for (const auto& l : layers_) {
    if (l.kind == LayerKind::conv2d || l.kind == LayerKind::dense) {
      names.push_back(weight_name(l));
      names.push_back(bias_name(l));
    }
  }
  return names;
}

Tensor Network::forward(const ParamStore& params, const Tensor& x, bool train, Rng* rng, Pass* pass) const {
  if (x.rank() != input_shape_.size() + 1 ||
      !std::equal(input_shape_.begin(), input_shape_.end(), x.shape().begin() + 1)) {
    throw ShapeError(prefix_ + ": input shape " + shape_string(x.shape()) + " does not match [B] + " +
                     shape_string(input_shape_));
  }
  const std::size_t batch = x.dim(0);
  if (pass) {
    pass->layers.clear();
    pass->layers.resize(layers_.size());
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    LayerCache* cache = pass ? &pass->layers[i] : nullptr;
    if (cache) cache->in_shape = h.shape();
    switch (l.kind) {
      case LayerKind::conv2d: {
        Tensor y = conv2d_forward(h, params.value(weight_name(l)), params.value(bias_name(l)), l.stride, l.padding);
        if (cache) cache->input = std::move(h);
        h = std::move(y);
        break;
      }
      case LayerKind::dense: {
        Tensor y = dense_forward(h, params.value(weight_name(l)), params.value(bias_name(l)));
        if (cache) cache->input = std::move(h);
        h = std::move(y);
        break;
      }
      case LayerKind::activation:
        h = activation_forward(h, l.activation);
        if (cache) cache->aux = h;
        break;
      case LayerKind::dropout: {
        if (train && l.rate > 0.0 && rng == nullptr) {
          throw std::invalid_argument(prefix_ + ": training-mode dropout needs an Rng");
        }
        Rng dummy(0);
        Tensor mask;
        h = dropout_forward(h, l.rate, train, rng ? *rng : dummy, &mask);
        if (cache) cache->aux = std::move(mask);
        break;
      }
      case LayerKind::flatten:
      case LayerKind::reshape: {
        Shape s{batch};
        const Shape& per = shapes_[i + 1];
        s.insert(s.end(), per.begin(), per.end());
        h = std::move(h).reshaped(std::move(s));
        break;
      }
      case LayerKind::upsample:
        h = resize_nearest_forward(h, l.target[0], l.target[1]);
        break;
    }
  }
  return h;
}

Tensor Network::backward(const ParamStore& params, const Pass& pass, const Tensor& dy, Gradients* grads,
                         bool need_dx) const {
  if (pass.layers.size() != layers_.size()) throw StateError(prefix_ + ": backward called without a forward trace");
  Tensor g = dy;
  for (std::size_t idx = layers_.size(); idx-- > 0;) {
    const LayerSpec& l = layers_[idx];
    const LayerCache& cache = pass.layers[idx];
    const bool want_dx = need_dx || idx > 0;
    switch (l.kind) {
      case LayerKind::conv2d: {
        Conv2dGrads cg = conv2d_backward(cache.input, params.value(weight_name(l)), g, l.stride, l.padding, want_dx);
        if (grads) {
          accumulate(*grads, weight_name(l), cg.dw);
          accumulate(*grads, bias_name(l), cg.db);
        }
        g = std::move(cg.dx);
        break;
      }
      case LayerKind::dense: {
        DenseGrads dg = dense_backward(cache.input, params.value(weight_name(l)), g, want_dx);
        if (grads) {
          accumulate(*grads, weight_name(l), dg.dw);
          accumulate(*grads, bias_name(l), dg.db);
        }
        g = std::move(dg.dx);
        break;
      }
      case LayerKind::activation:
        g = activation_backward(cache.aux, g, l.activation);
        break;
      case LayerKind::dropout:
        g = dropout_backward(g, cache.aux);
        break;
      case LayerKind::flatten:
      case LayerKind::reshape:
        g = std::move(g).reshaped(cache.in_shape);
        break;
      case LayerKind::upsample:
        g = resize_nearest_backward(g, cache.in_shape[1], cache.in_shape[2]);
        break;
    }
    if (!want_dx) break;
  }
  return need_dx ? g : Tensor();
}

}  // namespace loft::nn
