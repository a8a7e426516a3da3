#include "wrnlab/wrn.hpp"

#include <cmath>
#include <random>

namespace wrnlab {
namespace {

template <typename T>
int residual_block(Network<T>& net, int x, int in, int out, int stride, const std::string& name, int stage,
                   int index) {
  const bool identity = in == out && stride == 1;
  const int bn1 = net.add_batch_norm(x, name + ".bn1");
  const int act1 = net.add_relu(bn1, name + ".relu1");
  const int conv1 = net.add_conv(act1, out, 3, stride, 1, name + ".conv1");
  const int bn2 = net.add_batch_norm(conv1, name + ".bn2");
  const int act2 = net.add_relu(bn2, name + ".relu2");
  const int conv2 = net.add_conv(act2, out, 3, 1, 1, name + ".conv2");
  int shortcut = x;
  BlockInfo info{stage, index, 0, {conv1 - 1, conv2 - 1}, -1};
  if (!identity) {
    shortcut = net.add_conv(act1, out, 1, stride, 0, name + ".shortcut");
    info.shortcut_conv = shortcut - 1;
  }
  const int sum = net.add_sum(conv2, shortcut, name + ".add");
  info.output_node = sum;
  net.add_block(info);
  return sum;
}

template <typename T>
Network<T> build_graph(const ArchSpec& spec, bool layout_only) {
  spec.validate();
  Network<T> net(Shape{static_cast<std::size_t>(spec.input_shape[0]), static_cast<std::size_t>(spec.input_shape[1]),
                       static_cast<std::size_t>(spec.input_shape[2])},
                 spec.num_classes, layout_only);
  int x = net.add_conv(net.input_node(), ArchSpec::kStemChannels, 3, 1, 1, "stem.conv");
  int in = ArchSpec::kStemChannels;
  for (int s = 0; s < 3; ++s) {
    const int out = spec.resolved_channels(s);
    const int stride = s == 0 ? 1 : 2;
    const int depth = spec.stages[static_cast<std::size_t>(s)].depth;
    const std::string prefix = "stage" + std::to_string(s + 1);
    if (depth == 0) {
      x = net.add_conv(x, out, 1, stride, 0, prefix + ".projection");
    }
    for (int b = 0; b < depth; ++b) {
      x = residual_block(net, x, b == 0 ? in : out, out, b == 0 ? stride : 1,
                         prefix + ".block" + std::to_string(b + 1), s + 1, b + 1);
    }
    in = out;
  }
  x = net.add_batch_norm(x, "head.bn");
  x = net.add_relu(x, "head.relu");
  x = net.add_avg_pool(x, "head.pool");
  net.add_linear(x, spec.num_classes, true, "head.linear");
  net.set_spec(spec);
  return net;
}

}  // namespace

template <typename T>
Network<T> build_network(const ArchSpec& spec, std::uint64_t seed) {
  Network<T> net = build_graph<T>(spec, false);
  std::mt19937_64 rng(seed);
  for (auto& p : net.parameters()) {
    auto& v = p.value;
    if (p.role == ParamRole::ConvWeight) {
      const double fan_out = static_cast<double>(v.dim(0) * v.dim(2) * v.dim(3));
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_out));
      for (auto& e : v.data()) e = static_cast<T>(dist(rng));
    } else if (p.role == ParamRole::LinearWeight) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(v.dim(1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& e : v.data()) e = static_cast<T>(dist(rng));
    }
  }
  return net;
}

template <typename T>
Network<T> build_linear_model(const Shape& input_shape, int num_classes) {
  Network<T> net(input_shape, num_classes);
  const int flat = net.add_flatten(net.input_node(), "flatten");
  net.add_linear(flat, num_classes, true, "linear");
  return net;
}

Network<float> build_layout(const ArchSpec& spec) { return build_graph<float>(spec, true); }

template Network<float> build_network<float>(const ArchSpec&, std::uint64_t);
template Network<double> build_network<double>(const ArchSpec&, std::uint64_t);
template Network<float> build_linear_model<float>(const Shape&, int);
template Network<double> build_linear_model<double>(const Shape&, int);

}  // namespace wrnlab
