#include <random>

#include "doctest.h"
#include "wrnlab/arch.hpp"
#include "wrnlab/config.hpp"
#include "wrnlab/rational.hpp"
#include "wrnlab/wrn.hpp"

using namespace wrnlab;

namespace {

ArchSpec spec_of(const char* d, const char* w, Rational g = Rational(1), int classes = 10) {
  return parse_config(d, w, g, classes);
}

double millions(std::int64_t n) { return static_cast<double>(n) / 1e6; }

}  // namespace

TEST_SUITE("arch") {
  TEST_CASE("notation parsing") {
    const ArchSpec s = spec_of("d9-7-1", "w10-10-4");
    CHECK(s.stages[0].depth == 9);
    CHECK(s.stages[1].depth == 7);
    CHECK(s.stages[2].depth == 1);
    CHECK(s.stages[2].width == Rational(4));
    CHECK(s.notation() == "d9-7-1_w10-10-4_g1");
    CHECK(parse_notation(s.notation(), 10) == s);
    CHECK(parse_notation("d1-1-1_w2-2-0.8_g0.5", 2).gamma == Rational(1, 2));
  }

  TEST_CASE("malformed notation names the offending token") {
    try {
      spec_of("d5-x-5", "w10-10-10");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.token() == "x");
      CHECK(std::string(e.what()).find("\"x\"") != std::string::npos);
    }
    CHECK_THROWS_AS(spec_of("d5-5", "w10-10-10"), ParseError);
    CHECK_THROWS_AS(spec_of("d5--1-5", "w10-10-10"), ParseError);
    CHECK_THROWS_AS(spec_of("d5-5-5", "w10-10-q"), ParseError);
  }

  TEST_CASE("resolved widths") {
    CHECK(spec_of("d5-5-5", "w10-10-10").resolved_widths() == std::array<int, 3>{160, 320, 640});
    CHECK(scale(spec_of("d5-5-5", "w10-10-4"), Rational(2)).resolved_widths() == std::array<int, 3>{320, 640, 512});
    CHECK(scale(spec_of("d5-5-5", "w10-10-4"), Rational(1, 4)).resolved_widths() == std::array<int, 3>{40, 80, 64});
    CHECK_THROWS_AS(scale(spec_of("d5-5-5", "w10-10-4"), Rational(0)), ValidationError);
    CHECK_THROWS_AS(spec_of("d5-5-5", "w0-10-4"), ValidationError);
  }

  TEST_CASE("published parameter counts") {
    struct Row {
      const char* d;
      const char* w;
      Rational g;
      int classes;
      double m;
    };
    const Row rows[] = {
        {"d5-5-5", "w10-10-10", Rational(1), 10, 46.16}, {"d9-7-1", "w10-10-10", Rational(1), 10, 22.19},
        {"d9-9-1", "w10-10-10", Rational(1), 10, 25.88}, {"d7-5-1", "w10-10-10", Rational(1), 10, 17.58},
        {"d5-5-5", "w10-10-2", Rational(1), 10, 12.66},  {"d5-5-5", "w10-10-4", Rational(1), 10, 17.05},
        {"d5-5-5", "w10-10-6", Rational(1), 10, 24.10},  {"d5-5-5", "w10-10-8", Rational(1), 10, 33.80},
        {"d5-5-5", "w10-10-4", Rational(1, 4), 10, 1.07}, {"d5-5-5", "w10-10-4", Rational(1, 2), 10, 4.27},
        {"d5-5-5", "w10-10-4", Rational(3, 2), 10, 38.33}, {"d5-5-5", "w10-10-4", Rational(2), 10, 68.12},
        {"d5-5-5", "w12-12-12", Rational(1), 10, 66.46}, {"d5-5-5", "w12-12-12", Rational(1), 100, 66.53},
    };
    for (const auto& r : rows) {
      CAPTURE(r.d);
      CAPTURE(r.w);
      CHECK(std::abs(millions(count_params(spec_of(r.d, r.w, r.g, r.classes))) - r.m) <= 0.005 + 1e-9);
    }
    CHECK(count_params(spec_of("d5-5-5", "w10-10-10")) == 46160474);
    CHECK(format_millions(46160474) == "46.16M");
  }

  TEST_CASE("closed-form count equals the built network") {
    std::mt19937_64 rng(11);
    const Rational gammas[] = {Rational(1, 4), Rational(1, 2), Rational(1), Rational(3, 2), Rational(2)};
    for (int trial = 0; trial < 200; ++trial) {
      ArchSpec s;
      for (auto& st : s.stages) {
        st.depth = static_cast<int>(rng() % 10);
        st.width = Rational(static_cast<std::int64_t>(1 + rng() % 12));
      }
      s.gamma = gammas[rng() % 5];
      s.num_classes = 2 + static_cast<int>(rng() % 9);
      s.input_shape = {3, 8, 8};
      std::int64_t built = 0;
      const auto net = build_layout(s);
      for (std::size_t p = 0; p < net.parameters().size(); ++p)
        built += static_cast<std::int64_t>(shape_numel(net.parameter_shape(p)));
      CAPTURE(s.notation());
      CHECK(count_params(s) == built);
      CHECK(net.parameter_count() == built);
    }
  }

  TEST_CASE("count is monotone in depth and width") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
      ArchSpec s;
      for (auto& st : s.stages) {
        st.depth = static_cast<int>(rng() % 9);
        st.width = Rational(static_cast<std::int64_t>(1 + rng() % 11));
      }
      const std::size_t i = rng() % 3;
      ArchSpec deeper = s, wider = s;
      deeper.stages[i].depth += 1;
      wider.stages[i].width = Rational(s.stages[i].width.num() + s.stages[i].width.den(), s.stages[i].width.den());
      CHECK(count_params(deeper) >= count_params(s));
      CHECK(count_params(wider) >= count_params(s));
    }
  }

  TEST_CASE("network layout") {
    const auto net = build_network<double>(spec_of("d1-1-1", "w1-1-1"), 0);
    CHECK(net.blocks().size() == 3);
    CHECK(net.parameter("head.linear.weight").value.shape() == Shape{10, 64});
    const auto big = spec_of("d5-5-5", "w10-10-10");
    CHECK(big.resolved_widths()[2] == 640);
    const auto a = build_network<double>(spec_of("d1-1-1", "w1-1-1"), 5);
    const auto b = build_network<double>(spec_of("d1-1-1", "w1-1-1"), 5);
    for (std::size_t i = 0; i < a.parameters().size(); ++i) CHECK(a.parameters()[i].value == b.parameters()[i].value);
  }

  TEST_CASE("empty stage becomes a projection") {
    ArchSpec s = spec_of("d5-5-0", "w10-10-4");
    s.input_shape = {3, 8, 8};
    const auto net = build_network<float>(s, 0);
    CHECK(net.parameter("stage3.projection.weight").value.shape() == Shape{256, 320, 1, 1});
    CHECK(net.node_shape(net.output_node()) == Shape{10});
  }

  TEST_CASE("flop convention") {
    // 1x1 conv 1->1 on 2x2: 4 MACs, computed the same way as the network formula.
    CHECK(2 * 2 * 1 * 1 * 1 == 4);
    ArchSpec s = spec_of("d1-1-1", "w1-1-1");
    // Independent per-layer tally for the toy spec on 32x32 inputs.
    auto conv = [](std::int64_t om, std::int64_t k, std::int64_t in, std::int64_t out) { return om * om * k * k * in * out; };
    std::int64_t expect = conv(32, 3, 3, 16);
    // stage 1: 16 -> 16 at 32x32, identity shortcut
    expect += 16 * 32 * 32 * 2 + conv(32, 3, 16, 16) + 16 * 32 * 32 * 2 + conv(32, 3, 16, 16);
    // stage 2: 16 -> 32, stride 2, projection
    expect += 16 * 32 * 32 * 2 + conv(16, 3, 16, 32) + 32 * 16 * 16 * 2 + conv(16, 3, 32, 32) + conv(16, 1, 16, 32);
    // stage 3: 32 -> 64
    expect += 32 * 16 * 16 * 2 + conv(8, 3, 32, 64) + 64 * 8 * 8 * 2 + conv(8, 3, 64, 64) + conv(8, 1, 32, 64);
    // head: bn, relu, pool, linear
    expect += 64 * 8 * 8 * 2 + 64 + 64 * 10 + 10;
    CHECK(count_flops(s) == expect);

    ArchSpec wide = spec_of("d1-1-1", "w2-2-2");
    auto interior = [](const ArchSpec& a) {
      std::int64_t sum = 0;
      for (const auto& f : flops_breakdown(a)) {
        if (f.name == "stage2.block1.conv2") sum += f.macs;
      }
      return sum;
    };
    CHECK(interior(wide) == 4 * interior(s));
  }

  TEST_CASE("config text round trip") {
    ArchSpec s = spec_of("d2-0-1", "w2-2-0.8", Rational(1, 2), 4);
    s.input_shape = {3, 16, 16};
    CHECK(arch_from_config_text(to_config_text(s)) == s);
    CHECK_THROWS_AS(arch_from_config_text("depths = d1-1-1\nwidths = w1-1-1\nbogus = 3\n"), ValidationError);
  }
}

TEST_SUITE("rational") {
  TEST_CASE("parsing and rounding") {
    CHECK(Rational::parse("2.5") == Rational(5, 2));
    CHECK(Rational::parse("1/4") == Rational(1, 4));
    CHECK(Rational::parse("10") == Rational(10));
    CHECK_THROWS_AS(Rational::parse("-1"), ParseError);
    CHECK(Rational(5, 2).round_half_even() == 2);
    CHECK(Rational(7, 2).round_half_even() == 4);
    CHECK(Rational(51, 5).round_half_even() == 10);
  }
}

TEST_SUITE("config") {
  TEST_CASE("sections, comments and overrides") {
    auto cfg = KeyValueConfig::parse("# comment\n[train]\nepochs = 3\nlr = 0.05\n[attack]\nepsilon = 8/255\n");
    CHECK(cfg.get_int("train.epochs", 0) == 3);
    CHECK(cfg.get_double("attack.epsilon", 0) == doctest::Approx(8.0 / 255.0));
    cfg.apply_override("train.epochs=5");
    CHECK(cfg.get_int("train.epochs", 0) == 5);
    CHECK_THROWS_AS(cfg.apply_override("novalue"), ValidationError);
    CHECK_THROWS_AS(cfg.require_known({"train.epochs"}), ValidationError);
    CHECK(cfg.subtree("train").get_double("lr", 0) == doctest::Approx(0.05));
  }
}
