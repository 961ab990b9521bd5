#include "loft/loftgan/model.hpp"

#include <stdexcept>
#include <string>

#include "loft/error.hpp"
#include "loft/io.hpp"

namespace loft::gan {

namespace {

using nn::Activation;
using nn::LayerSpec;

struct ConvStage {
  std::size_t filters, kernel, stride;
};
constexpr ConvStage kStages[3] = {{16, 7, 3}, {32, 5, 2}, {48, 3, 1}};

std::vector<LayerSpec> feature_stack() {
  std::vector<LayerSpec> layers;
  for (int i = 0; i < 3; ++i) {
    const std::string id = std::to_string(i + 1);
    layers.push_back(LayerSpec::conv("conv" + id, kStages[i].filters, kStages[i].kernel, kStages[i].stride));
    layers.push_back(LayerSpec::act("relu" + id, Activation::relu));
  }
  return layers;
}

}  // namespace

LoftganModel build_model(std::size_t speckle_side, std::size_t phase_side, std::uint64_t seed) {
  if (speckle_side < kMinSide) {
    throw std::invalid_argument("build_model: speckle_side " + std::to_string(speckle_side) +
                                " is too small for the stride-3/2/1 chain (minimum " + std::to_string(kMinSide) + ")");
  }
  if (phase_side < kMinSide) {
    throw std::invalid_argument("build_model: phase_side " + std::to_string(phase_side) + " is too small (minimum " +
                                std::to_string(kMinSide) + ")");
  }
  LoftganModel m;
  m.speckle_side = speckle_side;
  m.phase_side = phase_side;
  m.seed = seed;
  const std::size_t phase_len = phase_side * phase_side;

  std::vector<LayerSpec> enc_layers = feature_stack();
  enc_layers.push_back(LayerSpec::flatten("flatten"));
  enc_layers.push_back(LayerSpec::dense("dense1", 512));
  enc_layers.push_back(LayerSpec::act("relu4", Activation::relu));
  enc_layers.push_back(LayerSpec::dropout("dropout", 0.5));
  enc_layers.push_back(LayerSpec::dense("dense2", phase_len));
  enc_layers.push_back(LayerSpec::act("sigmoid", Activation::sigmoid));
  m.enc = nn::Network("enc", {speckle_side, speckle_side, 1}, std::move(enc_layers));

  // Extents seen by the encoder convs: shapes()[0], [2], [4] are the conv inputs, [6] the last output.
  const auto& es = m.enc.shapes();
  const nn::Shape& last = es[6];
  std::vector<LayerSpec> gen_layers;
  gen_layers.push_back(LayerSpec::dense("dense1", 512));
  gen_layers.push_back(LayerSpec::act("relu1", Activation::relu));
  gen_layers.push_back(LayerSpec::dense("dense2", nn::shape_size(last)));
  gen_layers.push_back(LayerSpec::act("relu2", Activation::relu));
  gen_layers.push_back(LayerSpec::reshape("reshape", last));
  const std::size_t out_channels[3] = {32, 16, 1};
  for (int i = 0; i < 3; ++i) {
    const int stage = 2 - i;  // mirror encoder conv3, conv2, conv1
    const nn::Shape& target = es[static_cast<std::size_t>(2 * stage)];
    const std::string id = std::to_string(i + 1);
    gen_layers.push_back(LayerSpec::upsample("up" + id, target[0], target[1]));
    gen_layers.push_back(LayerSpec::conv("conv" + id, out_channels[i], kStages[stage].kernel, 1));
    gen_layers.push_back(LayerSpec::act(i < 2 ? "relu" + std::to_string(i + 3) : "sigmoid",
                                        i < 2 ? Activation::relu : Activation::sigmoid));
  }
  m.gen = nn::Network("gen", {phase_len}, std::move(gen_layers));

  m.dis_features = nn::Network("dis", {speckle_side, speckle_side, 1}, feature_stack());
  std::vector<LayerSpec> head;
  const std::size_t head_filters[3] = {16, 4, 1};
  for (int i = 0; i < 3; ++i) {
    const std::string id = std::to_string(i + 1);
    head.push_back(LayerSpec::conv("head" + id, head_filters[i], 3, 1));
    head.push_back(LayerSpec::act(i < 2 ? "head_relu" + id : "head_sigmoid",
                                  i < 2 ? Activation::relu : Activation::sigmoid));
  }
  m.dis_head = nn::Network("dis", m.dis_features.output_shape(), std::move(head));

  const Rng root(seed);
  Rng r_enc = root.split(1), r_gen = root.split(2), r_dis = root.split(3);
  m.enc.init_params(m.enc_params, r_enc);
  m.gen.init_params(m.gen_params, r_gen);
  m.dis_features.init_params(m.dis_params, r_dis);
  m.dis_head.init_params(m.dis_params, r_dis);

  if (m.gen.output_shape() != m.enc.input_shape()) {
    throw std::logic_error("generator output " + nn::shape_string(m.gen.output_shape()) +
                           " does not restore the speckle shape");
  }
  return m;
}

bool same_parameters(const LoftganModel& a, const LoftganModel& b) {
  return a.enc_params.same_values(b.enc_params) && a.gen_params.same_values(b.gen_params) &&
         a.dis_params.same_values(b.dis_params);
}

void save_model(const LoftganModel& model, const std::filesystem::path& path) {
  std::map<std::string, std::string> header{{"format", "loftgan-1"},
                                            {"speckle_side", std::to_string(model.speckle_side)},
                                            {"phase_side", std::to_string(model.phase_side)},
                                            {"seed", std::to_string(model.seed)}};
  std::vector<io::NamedArray> arrays;
  for (const nn::ParamStore* store : {&model.enc_params, &model.gen_params, &model.dis_params}) {
    for (const auto& [name, p] : *store) {
      std::vector<std::uint64_t> dims(p.value.shape().begin(), p.value.shape().end());
      arrays.push_back({name, std::move(dims), p.value.vec()});
    }
  }
  io::save_checkpoint(path, header, arrays);
}

LoftganModel load_model(const std::filesystem::path& path) {
  std::map<std::string, std::string> header;
  const auto arrays = io::load_checkpoint(path, &header);
  if (header["format"] != "loftgan-1") throw FormatError(path.string() + ": not a loftgan checkpoint", 0);
  LoftganModel m = build_model(std::stoull(header.at("speckle_side")), std::stoull(header.at("phase_side")),
                               std::stoull(header.at("seed")));
  std::size_t loaded = 0;
  for (const auto& a : arrays) {
    nn::ParamStore* store = nullptr;
    if (a.name.rfind("enc/", 0) == 0) store = &m.enc_params;
    if (a.name.rfind("gen/", 0) == 0) store = &m.gen_params;
    if (a.name.rfind("dis/", 0) == 0) store = &m.dis_params;
    if (store == nullptr || !store->contains(a.name)) {
      throw FormatError(path.string() + ": unexpected parameter " + a.name, 0);
    }
    nn::Tensor& dst = store->value(a.name);
    nn::Shape shape(a.dims.begin(), a.dims.end());
    if (shape != dst.shape()) throw ShapeError(path.string() + ": parameter " + a.name + " has the wrong shape");
    dst = nn::Tensor(std::move(shape), a.values);
    ++loaded;
  }
  if (loaded != m.enc_params.size() + m.gen_params.size() + m.dis_params.size()) {
    throw FormatError(path.string() + ": checkpoint is missing parameters", 0);
  }
  return m;
}

nn::Tensor speckle_batch(std::span<const SpecklePattern> speckles, std::size_t side) {
  nn::Tensor t({speckles.size(), side, side, 1});
  const std::size_t n = side * side;
  for (std::size_t b = 0; b < speckles.size(); ++b) {
    if (speckles[b].size() != n) {
      throw ShapeError("speckle " + std::to_string(b) + " has " + std::to_string(speckles[b].size()) +
                       " values, model expects " + std::to_string(n));
    }
    std::copy(speckles[b].values().begin(), speckles[b].values().end(), t.ptr() + b * n);
  }
  return t;
}

nn::Tensor phase_batch(std::span<const PhasePattern> phases, std::size_t length) {
  nn::Tensor t({phases.size(), length});
  for (std::size_t b = 0; b < phases.size(); ++b) {
    if (phases[b].size() != length) {
      throw ShapeError("phase " + std::to_string(b) + " has " + std::to_string(phases[b].size()) +
                       " values, model expects " + std::to_string(length));
    }
    std::copy(phases[b].values().begin(), phases[b].values().end(), t.ptr() + b * length);
  }
  return t;
}

}  // namespace loft::gan
