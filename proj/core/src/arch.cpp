#include "wrnlab/arch.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

#include "wrnlab/config.hpp"
#include "wrnlab/errors.hpp"

namespace wrnlab {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::Relu: return "relu";
    case LayerKind::Add: return "add";
    case LayerKind::Pool: return "pool";
    case LayerKind::Linear: return "linear";
    case LayerKind::Flatten: return "flatten";
  }
  return "unknown";
}

namespace {

std::vector<std::string> split_stages(std::string_view notation, char prefix, const char* what) {
  if (notation.empty() || notation.front() != prefix) {
    throw ParseError(std::string(what) + " notation must start with '" + prefix + "'", std::string(notation));
  }
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : notation.substr(1)) {
    if (c == '-') {
      tokens.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  tokens.push_back(cur);
  if (tokens.size() != 3) {
    for (const auto& t : tokens)
      if (t.empty()) throw ParseError(std::string(what) + " notation has a negative or empty value", "-");
    throw ParseError(std::string(what) + " notation needs exactly three stages", std::string(notation));
  }
  return tokens;
}

}  // namespace

std::array<int, 3> parse_depths(std::string_view notation) {
  auto tokens = split_stages(notation, 'd', "depth");
  std::array<int, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const auto& t = tokens[static_cast<std::size_t>(i)];
    if (t.empty()) throw ParseError("depth notation has a negative or empty value", "-");
    if (t.size() > 6) throw ParseError("depth value too large", t);
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c))) throw ParseError("malformed depth notation", t);
    out[static_cast<std::size_t>(i)] = std::stoi(t);
  }
  return out;
}

std::array<Rational, 3> parse_widths(std::string_view notation) {
  auto tokens = split_stages(notation, 'w', "width");
  std::array<Rational, 3> out{};
  for (int i = 0; i < 3; ++i) {
    const auto& t = tokens[static_cast<std::size_t>(i)];
    if (t.empty()) throw ParseError("width notation has a negative or empty value", "-");
    try {
      out[static_cast<std::size_t>(i)] = Rational::parse(t);
    } catch (const ParseError&) {
      throw ParseError("malformed width notation", t);
    }
  }
  return out;
}

int ArchSpec::resolved_channels(int stage) const {
  const auto& s = stages.at(static_cast<std::size_t>(stage));
  return static_cast<int>((Rational(kBaseChannels[static_cast<std::size_t>(stage)]) * s.width * gamma).round_half_even());
}

std::array<int, 3> ArchSpec::resolved_widths() const {
  return {resolved_channels(0), resolved_channels(1), resolved_channels(2)};
}

std::string ArchSpec::depth_notation() const {
  return "d" + std::to_string(stages[0].depth) + "-" + std::to_string(stages[1].depth) + "-" +
         std::to_string(stages[2].depth);
}

std::string ArchSpec::width_notation() const {
  return "w" + stages[0].width.str() + "-" + stages[1].width.str() + "-" + stages[2].width.str();
}

std::string ArchSpec::notation() const {
  return depth_notation() + "_" + width_notation() + "_g" + gamma.str();
}

void ArchSpec::validate() const {
  if (gamma <= Rational(0)) throw ValidationError("gamma must be positive");
  if (num_classes < 1) throw ValidationError("num_classes must be positive");
  for (int d : input_shape)
    if (d < 1) throw ValidationError("input_shape entries must be positive");
  if (input_shape[1] % 4 != 0 || input_shape[2] % 4 != 0) {
    throw ValidationError("input height and width must be divisible by 4 (two stride-2 stages)");
  }
  for (int i = 0; i < 3; ++i) {
    const auto& s = stages[static_cast<std::size_t>(i)];
    if (s.depth < 0) throw ValidationError("stage depth must be non-negative");
    if (resolved_channels(i) < 1) {
      throw ValidationError("stage " + std::to_string(i + 1) + " resolves to zero channels (" + width_notation() +
                            ", gamma " + gamma.str() + ")");
    }
  }
}

ArchSpec parse_config(std::string_view depth_notation, std::string_view width_notation, Rational gamma,
                      int num_classes) {
  ArchSpec spec;
  const auto depths = parse_depths(depth_notation);
  const auto widths = parse_widths(width_notation);
  for (std::size_t i = 0; i < 3; ++i) spec.stages[i] = StageConfig{depths[i], widths[i]};
  spec.gamma = gamma;
  spec.num_classes = num_classes;
  spec.validate();
  return spec;
}

ArchSpec parse_notation(std::string_view notation, int num_classes, std::array<int, 3> input_shape) {
  const auto first = notation.find('_');
  if (first == std::string_view::npos) throw ParseError("architecture notation needs depth and width parts", std::string(notation));
  const std::string_view depth = notation.substr(0, first);
  std::string_view rest = notation.substr(first + 1);
  Rational gamma(1);
  if (const auto g = rest.find("_g"); g != std::string_view::npos) {
    gamma = Rational::parse(rest.substr(g + 2));
    rest = rest.substr(0, g);
  }
  ArchSpec spec = parse_config(depth, rest, Rational(1), num_classes);
  spec.input_shape = input_shape;
  return scale(spec, gamma);
}

ArchSpec scale(const ArchSpec& spec, Rational gamma) {
  if (gamma <= Rational(0)) throw ValidationError("scale: gamma must be positive, got " + gamma.str());
  ArchSpec out = spec;
  out.gamma = gamma;
  out.validate();
  return out;
}

std::int64_t count_params(const ArchSpec& spec) {
  spec.validate();
  const std::int64_t stem = ArchSpec::kStemChannels;
  std::int64_t total = static_cast<std::int64_t>(spec.input_shape[0]) * stem * 9;
  std::int64_t in = stem;
  for (int i = 0; i < 3; ++i) {
    const std::int64_t out = spec.resolved_channels(i);
    const int depth = spec.stages[static_cast<std::size_t>(i)].depth;
    const int stride = i == 0 ? 1 : 2;
    if (depth == 0) {
      total += in * out;
      in = out;
      continue;
    }
    // first block: bn1 + conv1 + bn2 + conv2 (+ projection shortcut)
    total += 2 * in + 9 * in * out + 2 * out + 9 * out * out;
    if (in != out || stride != 1) total += in * out;
    // remaining blocks are out -> out with identity shortcuts
    total += static_cast<std::int64_t>(depth - 1) * (4 * out + 18 * out * out);
    in = out;
  }
  total += 2 * in + in * spec.num_classes + spec.num_classes;
  return total;
}

std::vector<FlopEntry> flops_breakdown(const ArchSpec& spec) {
  spec.validate();
  std::vector<FlopEntry> out;
  auto conv = [&](std::string name, int cin, int cout, int k, int stride, int m) {
    const std::int64_t om = (m + (k == 3 ? 2 : 0) - k) / stride + 1;
    out.push_back({std::move(name), {LayerKind::Conv, cin, cout, k, stride, m},
                   om * om * k * k * static_cast<std::int64_t>(cin) * cout});
    return static_cast<int>(om);
  };
  auto elementwise = [&](std::string name, LayerKind kind, int c, int m) {
    out.push_back({std::move(name), {kind, c, c, 1, 1, m}, static_cast<std::int64_t>(c) * m * m});
  };
  int m = spec.input_shape[1];
  int in = ArchSpec::kStemChannels;
  m = conv("stem.conv", spec.input_shape[0], in, 3, 1, m);
  for (int i = 0; i < 3; ++i) {
    const int cout = spec.resolved_channels(i);
    const int depth = spec.stages[static_cast<std::size_t>(i)].depth;
    const int stride = i == 0 ? 1 : 2;
    const std::string sp = "stage" + std::to_string(i + 1);
    if (depth == 0) {
      m = conv(sp + ".projection", in, cout, 1, stride, m);
      in = cout;
      continue;
    }
    for (int b = 0; b < depth; ++b) {
      const std::string bp = sp + ".block" + std::to_string(b + 1);
      const int s = b == 0 ? stride : 1;
      elementwise(bp + ".bn1", LayerKind::BatchNorm, in, m);
      elementwise(bp + ".relu1", LayerKind::Relu, in, m);
      const int m_out = conv(bp + ".conv1", in, cout, 3, s, m);
      elementwise(bp + ".bn2", LayerKind::BatchNorm, cout, m_out);
      elementwise(bp + ".relu2", LayerKind::Relu, cout, m_out);
      conv(bp + ".conv2", cout, cout, 3, 1, m_out);
      if (in != cout || s != 1) conv(bp + ".shortcut", in, cout, 1, s, m);
      in = cout;
      m = m_out;
    }
  }
  elementwise("head.bn", LayerKind::BatchNorm, in, m);
  elementwise("head.relu", LayerKind::Relu, in, m);
  out.push_back({"head.pool", {LayerKind::Pool, in, in, m, m, m}, in});
  out.push_back({"head.linear", {LayerKind::Linear, in, spec.num_classes, 1, 1, 1},
                 static_cast<std::int64_t>(in) * spec.num_classes + spec.num_classes});
  return out;
}

std::int64_t count_flops(const ArchSpec& spec) {
  std::int64_t total = 0;
  for (const auto& e : flops_breakdown(spec)) total += e.macs;
  return total;
}

std::string format_millions(std::int64_t count) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2fM", static_cast<double>(count) / 1e6);
  return buf;
}

std::string to_config_text(const ArchSpec& spec) {
  std::ostringstream os;
  os << "depths = " << spec.depth_notation() << "\n"
     << "widths = " << spec.width_notation() << "\n"
     << "gamma = " << spec.gamma.str() << "\n"
     << "num_classes = " << spec.num_classes << "\n"
     << "input_shape = " << spec.input_shape[0] << "," << spec.input_shape[1] << "," << spec.input_shape[2] << "\n";
  return os.str();
}

namespace {

std::array<int, 3> parse_input_shape(const std::string& text) {
  std::array<int, 3> out{};
  std::stringstream ss(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(ss, item, ',')) {
    if (i >= 3) throw ParseError("input_shape needs three entries", text);
    try {
      std::size_t used = 0;
      out[i] = std::stoi(item, &used);
      if (used != item.size()) throw ParseError("malformed input_shape", item);
    } catch (const std::logic_error&) {
      throw ParseError("malformed input_shape", item);
    }
    ++i;
  }
  if (i != 3) throw ParseError("input_shape needs three entries", text);
  return out;
}

}  // namespace

ArchSpec arch_from_config_text(std::string_view text) {
  KeyValueConfig cfg = KeyValueConfig::parse(text);
  KeyValueConfig arch = cfg.has("depths") ? cfg : cfg.subtree("arch");
  arch.require_known({"depths", "widths", "gamma", "num_classes", "input_shape"});
  ArchSpec spec = parse_config(arch.get_string("depths", "d5-5-5"), arch.get_string("widths", "w10-10-10"),
                               arch.get_rational("gamma", Rational(1)), arch.get_int("num_classes", 10));
  if (auto s = arch.find("input_shape")) spec.input_shape = parse_input_shape(*s);
  spec.validate();
  return spec;
}

}  // namespace wrnlab
