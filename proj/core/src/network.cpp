#include "wrnlab/network.hpp"

namespace wrnlab {

template <typename T>
Network<T>::Network(Shape input_shape, int num_classes, bool layout_only)
    : input_shape_(std::move(input_shape)), num_classes_(num_classes), layout_only_(layout_only) {
  if (input_shape_.empty()) throw ShapeError("network input shape must not be empty");
  for (auto d : input_shape_)
    if (d == 0) throw ShapeError("network input shape must be positive, got " + shape_string(input_shape_));
  if (num_classes_ < 1) throw ValidationError("num_classes must be positive");
}

template <typename T>
const Shape& Network<T>::node_shape(int node) const {
  check_node(node, "node_shape");
  return node == 0 ? input_shape_ : layers_[static_cast<std::size_t>(node - 1)].out_shape;
}

template <typename T>
void Network<T>::check_node(int node, const char* op) const {
  if (node < 0 || node > static_cast<int>(layers_.size())) {
    throw ShapeError(std::string(op) + ": node " + std::to_string(node) + " does not exist");
  }
}

template <typename T>
int Network<T>::push(Layer layer) {
  layers_.push_back(std::move(layer));
  return static_cast<int>(layers_.size());
}

template <typename T>
std::size_t Network<T>::add_param(std::string name, ParamRole role, Shape shape) {
  if (param_index_.count(name)) throw ValidationError("duplicate parameter name '" + name + "'");
  param_index_[name] = params_.size();
  param_shapes_.push_back(shape);
  params_.push_back(Parameter<T>{std::move(name), role, BasicTensor<T>(layout_only_ ? Shape{1} : std::move(shape))});
  return params_.size() - 1;
}

template <typename T>
int Network<T>::add_conv(int from, int out_channels, int kernel, int stride, int padding, const std::string& name) {
  check_node(from, "add_conv");
  const Shape in = node_shape(from);
  if (in.size() != 3) throw ShapeError("layer '" + name + "': conv input must be [C,H,W], got " + shape_string(in));
  if (kernel != 1 && kernel != 3) throw ShapeError("layer '" + name + "': kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw ShapeError("layer '" + name + "': stride must be 1 or 2");
  if (in[1] + 2 * static_cast<std::size_t>(padding) < static_cast<std::size_t>(kernel)) {
    throw ShapeError("layer '" + name + "': kernel larger than padded input " + shape_string(in));
  }
  Layer l;
  l.kind = LayerKind::Conv;
  l.name = name;
  l.inputs = {from};
  l.stride = stride;
  l.padding = padding;
  l.in_shape = in;
  l.out_shape = {static_cast<std::size_t>(out_channels), ops::conv_out_size(in[1], kernel, stride, padding),
                 ops::conv_out_size(in[2], kernel, stride, padding)};
  l.shape = {LayerKind::Conv, static_cast<int>(in[0]), out_channels, kernel, stride, static_cast<int>(in[1])};
  l.params = {add_param(name + ".weight", ParamRole::ConvWeight,
                        {static_cast<std::size_t>(out_channels), in[0], static_cast<std::size_t>(kernel),
                         static_cast<std::size_t>(kernel)})};
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_batch_norm(int from, const std::string& name) {
  check_node(from, "add_batch_norm");
  const Shape in = node_shape(from);
  const std::size_t c = in[0];
  Layer l;
  l.kind = LayerKind::BatchNorm;
  l.name = name;
  l.inputs = {from};
  l.in_shape = in;
  l.out_shape = in;
  l.shape = {LayerKind::BatchNorm, static_cast<int>(c), static_cast<int>(c), 1, 1,
             in.size() > 1 ? static_cast<int>(in[1]) : 1};
  const std::size_t scale = add_param(name + ".scale", ParamRole::BnScale, {c});
  const std::size_t shift = add_param(name + ".shift", ParamRole::BnShift, {c});
  params_[scale].value.fill(T{1});
  l.params = {scale, shift};
  l.bn_state = static_cast<int>(bn_states_.size());
  bn_states_.push_back({BasicTensor<T>(Shape{c}, T{0}), BasicTensor<T>(Shape{c}, T{1})});
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_relu(int from, const std::string& name) {
  check_node(from, "add_relu");
  const Shape in = node_shape(from);
  Layer l;
  l.kind = LayerKind::Relu;
  l.name = name;
  l.inputs = {from};
  l.in_shape = in;
  l.out_shape = in;
  l.shape = {LayerKind::Relu, static_cast<int>(in[0]), static_cast<int>(in[0]), 1, 1,
             in.size() > 1 ? static_cast<int>(in[1]) : 1};
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_sum(int a, int b, const std::string& name) {
  check_node(a, "add_sum");
  check_node(b, "add_sum");
  if (node_shape(a) != node_shape(b)) {
    throw ShapeError("layer '" + name + "': residual add of " + shape_string(node_shape(a)) + " and " +
                     shape_string(node_shape(b)));
  }
  const Shape in = node_shape(a);
  Layer l;
  l.kind = LayerKind::Add;
  l.name = name;
  l.inputs = {a, b};
  l.in_shape = in;
  l.out_shape = in;
  l.shape = {LayerKind::Add, static_cast<int>(in[0]), static_cast<int>(in[0]), 1, 1,
             in.size() > 1 ? static_cast<int>(in[1]) : 1};
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_avg_pool(int from, const std::string& name) {
  check_node(from, "add_avg_pool");
  const Shape in = node_shape(from);
  if (in.size() != 3) throw ShapeError("layer '" + name + "': pool input must be [C,H,W], got " + shape_string(in));
  Layer l;
  l.kind = LayerKind::Pool;
  l.name = name;
  l.inputs = {from};
  l.in_shape = in;
  l.out_shape = {in[0]};
  l.shape = {LayerKind::Pool, static_cast<int>(in[0]), static_cast<int>(in[0]), static_cast<int>(in[1]),
             static_cast<int>(in[1]), static_cast<int>(in[1])};
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_flatten(int from, const std::string& name) {
  check_node(from, "add_flatten");
  const Shape in = node_shape(from);
  Layer l;
  l.kind = LayerKind::Flatten;
  l.name = name;
  l.inputs = {from};
  l.in_shape = in;
  l.out_shape = {shape_numel(in)};
  l.shape = {LayerKind::Flatten, static_cast<int>(shape_numel(in)), static_cast<int>(shape_numel(in)), 1, 1, 1};
  return push(std::move(l));
}

template <typename T>
int Network<T>::add_linear(int from, int out_features, bool bias, const std::string& name) {
  check_node(from, "add_linear");
  const Shape in = node_shape(from);
  if (in.size() != 1) throw ShapeError("layer '" + name + "': linear input must be flat, got " + shape_string(in));
  Layer l;
  l.kind = LayerKind::Linear;
  l.name = name;
  l.inputs = {from};
  l.in_shape = in;
  l.out_shape = {static_cast<std::size_t>(out_features)};
  l.shape = {LayerKind::Linear, static_cast<int>(in[0]), out_features, 1, 1, 1};
  l.params = {add_param(name + ".weight", ParamRole::LinearWeight, {static_cast<std::size_t>(out_features), in[0]})};
  if (bias) l.params.push_back(add_param(name + ".bias", ParamRole::LinearBias, {static_cast<std::size_t>(out_features)}));
  return push(std::move(l));
}

template <typename T>
Parameter<T>& Network<T>::parameter(const std::string& name) {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw ValidationError("no parameter named '" + name + "'");
  return params_[it->second];
}

template <typename T>
const Parameter<T>& Network<T>::parameter(const std::string& name) const {
  auto it = param_index_.find(name);
  if (it == param_index_.end()) throw ValidationError("no parameter named '" + name + "'");
  return params_[it->second];
}

template <typename T>
std::int64_t Network<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& s : param_shapes_) n += static_cast<std::int64_t>(shape_numel(s));
  return n;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
  Network<U> out(input_shape_, num_classes_, layout_only_);
  out.layers_ = layers_;
  out.param_shapes_ = param_shapes_;
  out.param_index_ = param_index_;
  out.blocks_ = blocks_;
  out.spec_ = spec_;
  for (const auto& p : params_) out.params_.push_back(Parameter<U>{p.name, p.role, p.value.template cast<U>()});
  for (const auto& s : bn_states_)
    out.bn_states_.push_back({s.running_mean.template cast<U>(), s.running_var.template cast<U>()});
  return out;
}

namespace {

template <typename T>
Shape batch_shape(std::size_t n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

template <typename T>
NodeId apply_layer(Tape<T>& tape, const Layer& layer, const std::vector<NodeId>& inputs,
                   const std::vector<NodeId>& param_nodes, Mode mode, BatchNormState<T>* bn_state) {
  switch (layer.kind) {
    case LayerKind::Conv:
      return ops::conv2d(tape, inputs[0], param_nodes[layer.params[0]], layer.stride, layer.padding);
    case LayerKind::BatchNorm: {
      const NodeId g = param_nodes[layer.params[0]];
      const NodeId b = param_nodes[layer.params[1]];
      if (mode == Mode::Eval) {
        return ops::batch_norm_eval(tape, inputs[0], g, b, bn_state->running_mean, bn_state->running_var,
                                    kBatchNormEps);
      }
      ops::BatchNormStats stats;
      const NodeId out = ops::batch_norm_train(tape, inputs[0], g, b, kBatchNormEps, &stats);
      for (std::size_t c = 0; c < stats.mean.size(); ++c) {
        auto& rm = bn_state->running_mean[c];
        auto& rv = bn_state->running_var[c];
        rm = static_cast<T>((1.0 - kBatchNormMomentum) * rm + kBatchNormMomentum * stats.mean[c]);
        rv = static_cast<T>((1.0 - kBatchNormMomentum) * rv + kBatchNormMomentum * stats.var[c]);
      }
      return out;
    }
    case LayerKind::Relu:
      return ops::relu(tape, inputs[0]);
    case LayerKind::Add:
      return ops::add(tape, inputs[0], inputs[1]);
    case LayerKind::Pool:
      return ops::global_avg_pool(tape, inputs[0]);
    case LayerKind::Flatten:
      return ops::flatten(tape, inputs[0]);
    case LayerKind::Linear:
      if (layer.params.size() > 1) {
        return ops::linear(tape, inputs[0], param_nodes[layer.params[0]], param_nodes[layer.params[1]]);
      }
      return ops::linear(tape, inputs[0], param_nodes[layer.params[0]]);
  }
  throw Error("unknown layer kind");
}

template <typename T>
ForwardPass<T> run_forward(const Network<T>& net, std::vector<BatchNormState<T>>* mutable_bn,
                           const BasicTensor<T>& x, Mode mode, GradTarget wrt) {
  const Shape& expected = net.input_shape();
  if (x.rank() != expected.size() + 1 || !std::equal(expected.begin(), expected.end(), x.shape().begin() + 1)) {
    throw ShapeError("network input: expected [N, " + shape_string(expected).substr(1) + ", got " +
                     shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  if (mode == Mode::Train && n == 1 && net.has_batch_norm()) {
    throw ValidationError("train mode with batch size 1 is undefined for batch normalization");
  }
  ForwardPass<T> pass;
  const bool want_input = wrt == GradTarget::Input || wrt == GradTarget::Both;
  const bool want_params = wrt == GradTarget::Params || wrt == GradTarget::Both;
  pass.nodes.push_back(pass.tape.leaf(x, want_input, "input"));
  for (const auto& p : net.parameters()) pass.params.push_back(pass.tape.leaf(p.value, want_params, p.name));
  for (const auto& layer : net.layers()) {
    std::vector<NodeId> ins;
    for (int i : layer.inputs) ins.push_back(pass.nodes[static_cast<std::size_t>(i)]);
    BatchNormState<T>* state = nullptr;
    BatchNormState<T> scratch;
    if (layer.bn_state >= 0) {
      if (mutable_bn) {
        state = &(*mutable_bn)[static_cast<std::size_t>(layer.bn_state)];
      } else {
        scratch = net.batch_norm_states()[static_cast<std::size_t>(layer.bn_state)];
        state = &scratch;
      }
    }
    pass.nodes.push_back(apply_layer(pass.tape, layer, ins, pass.params, mode, state));
  }
  pass.logits = pass.nodes.back();
  return pass;
}

}  // namespace

template <typename T>
ForwardPass<T> forward_network(Network<T>& net, const BasicTensor<T>& x, Mode mode, GradTarget wrt) {
  if (mode == Mode::Eval) return run_forward<T>(net, nullptr, x, mode, wrt);
  return run_forward<T>(net, &net.batch_norm_states(), x, mode, wrt);
}

template <typename T>
ForwardPass<T> forward_network(const Network<T>& net, const BasicTensor<T>& x, GradTarget wrt) {
  return run_forward<T>(net, nullptr, x, Mode::Eval, wrt);
}

template <typename T>
BasicTensor<T> predict_logits(const Network<T>& net, const BasicTensor<T>& x) {
  auto pass = forward_network(net, x, GradTarget::None);
  return pass.output();
}

template <typename T>
BasicTensor<T> forward_layer(Network<T>& net, std::size_t index, const BasicTensor<T>& input, Mode mode) {
  const Layer& layer = net.layers().at(index);
  const Shape expected = batch_shape<T>(input.rank() ? input.dim(0) : 0, layer.in_shape);
  if (input.shape() != expected) {
    throw ShapeError("layer '" + layer.name + "': expected input " + shape_string(expected) + ", got " +
                     shape_string(input.shape()));
  }
  if (mode == Mode::Train && layer.kind == LayerKind::BatchNorm && input.dim(0) == 1) {
    throw ValidationError("layer '" + layer.name + "': train mode with batch size 1");
  }
  Tape<T> tape;
  const NodeId in = tape.leaf(input, false);
  std::vector<NodeId> param_nodes(net.parameters().size());
  for (std::size_t p : layer.params) param_nodes[p] = tape.leaf(net.parameters()[p].value, false);
  std::vector<NodeId> ins(layer.inputs.size(), in);
  BatchNormState<T>* state =
      layer.bn_state >= 0 ? &net.batch_norm_states()[static_cast<std::size_t>(layer.bn_state)] : nullptr;
  const NodeId out = apply_layer(tape, layer, ins, param_nodes, mode, state);
  return tape.value(out);
}

template <typename T>
GradientMap<T> gradients(ForwardPass<T>& pass, const Network<T>& net, NodeId loss, GradTarget wrt) {
  if (loss >= pass.tape.size() || pass.tape.value(loss).numel() != 1) {
    throw Error("gradients: tape has no scalar root at node " + std::to_string(loss));
  }
  pass.tape.backward(loss);
  GradientMap<T> out;
  if (wrt == GradTarget::Params || wrt == GradTarget::Both) {
    for (std::size_t i = 0; i < net.parameters().size(); ++i) {
      const NodeId id = pass.params[i];
      if (!pass.tape.requires_grad(id)) throw Error("gradients: forward pass did not record parameter gradients");
      out.params[net.parameters()[i].name] =
          pass.tape.has_grad(id) ? pass.tape.grad(id) : BasicTensor<T>::zeros_like(pass.tape.value(id));
    }
  }
  if (wrt == GradTarget::Input || wrt == GradTarget::Both) {
    const NodeId id = pass.input();
    if (!pass.tape.requires_grad(id)) throw Error("gradients: forward pass did not record input gradients");
    out.input = pass.tape.has_grad(id) ? pass.tape.grad(id) : BasicTensor<T>::zeros_like(pass.tape.value(id));
  }
  return out;
}

#define WRNLAB_INSTANTIATE_NETWORK(T)                                                                        \
  template class Network<T>;                                                                                 \
  template ForwardPass<T> forward_network(Network<T>&, const BasicTensor<T>&, Mode, GradTarget);             \
  template ForwardPass<T> forward_network(const Network<T>&, const BasicTensor<T>&, GradTarget);             \
  template BasicTensor<T> predict_logits(const Network<T>&, const BasicTensor<T>&);                          \
  template BasicTensor<T> forward_layer(Network<T>&, std::size_t, const BasicTensor<T>&, Mode);              \
  template GradientMap<T> gradients(ForwardPass<T>&, const Network<T>&, NodeId, GradTarget);

WRNLAB_INSTANTIATE_NETWORK(float)
WRNLAB_INSTANTIATE_NETWORK(double)

template Network<float> Network<double>::cast<float>() const;
template Network<double> Network<float>::cast<double>() const;
template Network<double> Network<double>::cast<double>() const;
template Network<float> Network<float>::cast<float>() const;

}  // namespace wrnlab
