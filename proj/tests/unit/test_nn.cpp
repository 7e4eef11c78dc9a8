#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "tsr/nn/checkpoint.hpp"
#include "tsr/nn/gradcheck.hpp"
#include "tsr/nn/layers.hpp"
#include "tsr/nn/optim.hpp"
#include "tsr/nn/trainer.hpp"

using namespace tsr;
using namespace tsr::nn;
namespace fs = std::filesystem;

namespace {

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

LayerConfig tiny_config() {
  LayerConfig c;
  c.d_model = 8;
  c.ffn_dim = 16;
  c.heads = 2;
  c.dropout = 0.0;
  c.enc_layers = 1;
  c.dec_layers = 1;
  return c;
}

void check_passes(ParamStore<double>& store, const std::function<Var(Graph<double>&)>& loss) {
  const auto report = grad_check(store, loss);
  INFO(report.summary());
  CHECK(report.passed);
  CHECK(report.max_rel_error < 1e-4);
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tsr_unit_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("tensor shape contract") {
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), Error);
  CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), Error);
  Tensor<float> t(Shape{2, 3}, 1.5f);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).cols() == 2);
}

TEST_CASE("softmax examples") {
  Tensor<double> a(Shape{1, 2}, std::vector<double>{0, 0});
  auto s = softmax_rows(a);
  CHECK(s[0] == 0.5);
  CHECK(s[1] == 0.5);
  Tensor<double> b(Shape{1, 2}, std::vector<double>{1000, 0});
  s = softmax_rows(b);
  CHECK(std::isfinite(s[0]));
  CHECK(s[0] == doctest::Approx(1.0));
  CHECK(s[1] < 1e-300);
  std::mt19937_64 rng(3);
  auto x = random_tensor({20, 17}, rng, 30.0);
  s = softmax_rows(x);
  for (std::size_t r = 0; r < 20; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 17; ++c) {
      CHECK(s.at(r, c) >= 0.0);
      sum += s.at(r, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("masked softmax gives blocked entries zero weight") {
  Graph<double> g(false);
  std::mt19937_64 rng(4);
  auto mask = AttentionMask::causal(5);
  Var p = softmax(g, g.constant(random_tensor({5, 5}, rng)), &mask);
  const auto& v = g.value(p);
  for (std::size_t r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) {
      if (c > r) CHECK(v.at(r, c) == 0.0);
      sum += v.at(r, c);
    }
    CHECK(sum == doctest::Approx(1.0));
  }
}

TEST_CASE("cross entropy examples") {
  Graph<double> g(false);
  for (std::size_t v : {2u, 7u, 32u}) {
    Var logits = g.constant(Tensor<double>(Shape{3, v}, 0.25));
    CHECK(g.value(cross_entropy(g, logits, {0, 1, 1}))[0] == doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-15));
  }
  double prev = 1e9;
  for (double margin : {1.0, 5.0, 20.0, 50.0}) {
    Tensor<double> t(Shape{1, 4});
    t[2] = margin;
    const double loss = g.value(cross_entropy(g, g.constant(t), {2}))[0];
    CHECK(loss < prev);
    prev = loss;
  }
  CHECK(prev < 1e-20);
  Var logits = g.constant(Tensor<double>(Shape{2, 3}));
  // Ignored rows do not enter the mean.
  Tensor<double> t(Shape{2, 3});
  t.at(1, 0) = 3.0;
  CHECK(g.value(cross_entropy(g, g.constant(t), {2, -1}, -1))[0] == doctest::Approx(std::log(3.0)));
  try {
    cross_entropy(g, logits, {-1, -1}, -1);
    FAIL("expected AllIgnored");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AllIgnored);
  }
}

TEST_CASE("kl to uniform examples") {
  Graph<double> g(false);
  CHECK(g.value(kl_to_uniform(g, g.constant(Tensor<double>(Shape{3, 8}, 0.4))))[0] == doctest::Approx(0.0));
  Tensor<double> peaked(Shape{1, 8});
  peaked[5] = 200.0;
  CHECK(g.value(kl_to_uniform(g, g.constant(peaked)))[0] == doctest::Approx(std::log(8.0)));
}

TEST_CASE("grad_check: individual ops") {
  std::mt19937_64 rng(21);
  ParamStore<double> store;
  auto& a = store.add("a", random_tensor({4, 6}, rng));
  auto& b = store.add("b", random_tensor({6, 5}, rng));
  auto& c = store.add("c", random_tensor({4, 5}, rng));
  auto& bias = store.add("bias", random_tensor({5}, rng));
  auto& gamma = store.add("gamma", random_tensor({5}, rng));
  auto& beta = store.add("beta", random_tensor({5}, rng));
  auto& row = store.add("row", random_tensor({5}, rng));
  auto& table = store.add("table", random_tensor({7, 5}, rng));
  const auto w = random_tensor({4, 5}, rng);
  const auto other = random_tensor({4, 5}, rng);
  const auto w83 = random_tensor({8, 3}, rng);
  auto mask = AttentionMask::causal(4);

  SUBCASE("matmul variants") {
    check_passes(store, [&](Graph<double>& g) {
      Var ab = matmul(g, g.param(a), g.param(b));
      Var atc = matmul(g, g.param(a), g.param(c), true, false);  // [6,5]
      Var cbt = matmul(g, g.param(c), g.param(b), false, true);  // [4,6]
      Var s = add(g, weighted_sum(g, ab, w), weighted_sum(g, matmul(g, cbt, atc), w));
      return s;
    });
  }
  SUBCASE("elementwise, bias and activations") {
    check_passes(store, [&](Graph<double>& g) {
      Var x = add_bias(g, g.param(c), g.param(bias));
      Var y = add(g, gelu(g, x), scale(g, mul(g, x, g.param(c)), 0.3));
      Var z = add(g, y, relu(g, add(g, x, g.constant(other))));
      return weighted_sum(g, z, w);
    });
  }
  SUBCASE("layer norm") {
    check_passes(store, [&](Graph<double>& g) {
      return weighted_sum(g, layer_norm(g, g.param(c), g.param(gamma), g.param(beta)), w);
    });
  }
  SUBCASE("softmax with and without a mask") {
    check_passes(store, [&](Graph<double>& g) {
      Var sq = matmul(g, g.param(c), g.param(c), false, true);  // [4,4]
      Var p = softmax(g, sq, &mask);
      Var q = softmax(g, g.param(c));
      return add(g, weighted_sum(g, p, Tensor<double>(Shape{4, 4}, 0.7)), weighted_sum(g, q, w));
    });
  }
  SUBCASE("slice, concat, gather, replace") {
    check_passes(store, [&](Graph<double>& g) {
      Var x = g.param(c);
      Var l = slice_cols(g, x, 0, 2);
      Var r = slice_cols(g, x, 2, 3);
      Var back = concat_cols(g, std::vector<Var>{r, l});
      Var emb = gather_rows(g, g.param(table), {3, 0, 3, 6});
      Var rep = replace_rows(g, add(g, back, emb), {1, 0, 0, 1}, g.param(row));
      Var stacked = concat_rows(g, rep, g.param(c));
      return weighted_sum(g, slice_cols(g, stacked, 1, 3), w83);
    });
  }
  SUBCASE("softmax and cross entropy fused") {
    check_passes(store, [&](Graph<double>& g) {
      return cross_entropy(g, add_bias(g, g.param(c), g.param(bias)), {0, 4, -1, 2}, -1);
    });
  }
  SUBCASE("kl to uniform") {
    check_passes(store, [&](Graph<double>& g) { return kl_to_uniform(g, g.param(c)); });
  }
  SUBCASE("mse") {
    check_passes(store, [&](Graph<double>& g) { return mse(g, g.param(c), g.constant(other)); });
  }
}

TEST_CASE("grad_check: layers") {
  std::mt19937_64 rng(8);
  const auto cfg = tiny_config();
  const auto x = random_tensor({5, cfg.d_model}, rng);
  const auto mem = random_tensor({3, cfg.d_model}, rng);
  const auto w = random_tensor({5, cfg.d_model}, rng);
  const Mode eval;

  SUBCASE("linear") {
    ParamStore<double> store;
    Linear<double> lin(store, "lin", cfg.d_model, 3, rng);
    check_passes(store, [&](Graph<double>& g) {
      return weighted_sum(g, lin.forward(g, g.constant(x)), Tensor<double>(Shape{5, 3}, 0.5));
    });
  }
  SUBCASE("multi-head attention") {
    ParamStore<double> store;
    MultiHeadAttention<double> mha(store, "mha", cfg.d_model, cfg.heads, rng);
    auto mask = AttentionMask::causal(5);
    check_passes(store, [&](Graph<double>& g) {
      Var in = g.constant(x);
      return weighted_sum(g, mha.forward(g, in, in, &mask), w);
    });
  }
  SUBCASE("encoder layer") {
    ParamStore<double> store;
    EncoderLayer<double> layer(store, "enc", cfg, rng);
    check_passes(store, [&](Graph<double>& g) { return weighted_sum(g, layer.forward(g, g.constant(x), eval), w); });
  }
  SUBCASE("decoder layer") {
    ParamStore<double> store;
    DecoderLayer<double> layer(store, "dec", cfg, rng);
    check_passes(store, [&](Graph<double>& g) {
      return weighted_sum(g, layer.forward(g, g.constant(x), g.constant(mem), eval), w);
    });
  }
  SUBCASE("input gradient through an encoder layer") {
    ParamStore<double> store;
    EncoderLayer<double> layer(store, "enc", cfg, rng);
    auto& in = store.add("input", x);
    check_passes(store, [&](Graph<double>& g) { return weighted_sum(g, layer.forward(g, g.param(in), eval), w); });
  }
}

TEST_CASE("attention with a single position returns the value projection") {
  std::mt19937_64 rng(2);
  ParamStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 8, 2, rng);
  Graph<double> g(false);
  Var x = g.constant(random_tensor({1, 8}, rng));
  const auto& out = g.value(mha.forward(g, x, x, nullptr));
  const auto& want = g.value(mha.o.forward(g, mha.v.forward(g, x)));
  for (std::size_t i = 0; i < 8; ++i) CHECK(out[i] == doctest::Approx(want[i]).epsilon(1e-14));
}

TEST_CASE("attention weights sum to one over unmasked keys") {
  std::mt19937_64 rng(9);
  ParamStore<double> store;
  MultiHeadAttention<double> mha(store, "mha", 8, 2, rng);
  Graph<double> g(false);
  Var x = g.constant(random_tensor({6, 8}, rng));
  auto mask = AttentionMask::key_padding(6, {0, 0, 1, 0, 1, 0});
  AttentionProbe probe;
  mha.forward(g, x, x, &mask, &probe);
  REQUIRE(probe.size() == 2);
  for (Var p : probe) {
    const auto& w = g.value(p);
    for (std::size_t r = 0; r < 6; ++r) {
      CHECK(w.at(r, 2) == 0.0);
      CHECK(w.at(r, 4) == 0.0);
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) s += w.at(r, c);
      CHECK(s == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("causal decoder: future inputs never change past outputs") {
  std::mt19937_64 rng(12);
  LayerConfig cfg = tiny_config();
  ParamStore<float> store;
  DecoderLayer<float> layer(store, "dec", cfg, rng);
  const auto mem = random_tensor({4, cfg.d_model}, rng).cast<float>();
  auto x = random_tensor({7, cfg.d_model}, rng).cast<float>();
  auto run = [&](const Tensor<float>& in) {
    Graph<float> g(false);
    return g.value(layer.forward(g, g.constant(in), g.constant(mem), Mode{}));
  };
  const auto base = run(x);
  for (std::size_t j = 1; j < 7; ++j) {
    auto y = x;
    for (std::size_t c = 0; c < cfg.d_model; ++c) y.at(j, c) += 3.0f * static_cast<float>(c + 1);
    const auto out = run(y);
    for (std::size_t i = 0; i < j; ++i) {
      for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(out.at(i, c) == base.at(i, c));
    }
    bool changed = false;
    for (std::size_t c = 0; c < cfg.d_model; ++c) changed = changed || out.at(j, c) != base.at(j, c);
    CHECK(changed);
  }
}

TEST_CASE("incremental decoder steps match the full causal pass") {
  std::mt19937_64 rng(13);
  LayerConfig cfg = tiny_config();
  ParamStore<double> store;
  DecoderLayer<double> layer(store, "dec", cfg, rng);
  const auto mem = random_tensor({4, cfg.d_model}, rng);
  const auto x = random_tensor({6, cfg.d_model}, rng);
  Graph<double> g(false);
  Var m = g.constant(mem);
  const auto full = g.value(layer.forward(g, g.constant(x), m, Mode{}));
  Var mk = layer.cross_attn.project_key(g, m);
  Var mv = layer.cross_attn.project_value(g, m);
  KvCache<double> cache;
  for (std::size_t t = 0; t < 6; ++t) {
    Tensor<double> row(Shape{1, cfg.d_model}, std::vector<double>(x.row(t), x.row(t) + cfg.d_model));
    const auto out = g.value(layer.step(g, g.constant(row), mk, mv, cache));
    for (std::size_t c = 0; c < cfg.d_model; ++c) CHECK(out[c] == doctest::Approx(full.at(t, c)).epsilon(1e-12));
  }
}

TEST_CASE("dropout: identity in eval, unbiased in train") {
  Graph<double> g(false);
  Tensor<double> ones(Shape{1, 100000}, 1.0);
  Var x = g.constant(ones);
  CHECK(g.value(maybe_dropout(g, x, 0.5, Mode{})) == ones);
  std::mt19937_64 rng(77);
  CHECK(g.value(dropout(g, x, 0.0, rng)) == ones);
  for (double p : {0.1, 0.5}) {
    const auto& y = g.value(dropout(g, x, p, rng));
    double mean = 0.0;
    std::size_t zeros = 0;
    for (double v : y.values()) {
      mean += v;
      zeros += v == 0.0;
    }
    mean /= static_cast<double>(y.size());
    CHECK(std::abs(mean - 1.0) < 0.02);
    CHECK(static_cast<double>(zeros) / 1e5 == doctest::Approx(p).epsilon(0.05));
  }
}

TEST_CASE("adamw examples") {
  ParamStore<double> store;
  auto& p = store.add("p", Tensor<double>(Shape{3}, std::vector<double>{1.0, -2.0, 0.5}));
  GradBuffer<double> grads(store);

  SUBCASE("zero gradient, no decay") {
    AdamW<double> opt(store, {0.9, 0.999, 1e-8, 0.0});
    opt.step(grads, 0.1);
    CHECK(p.value[0] == 1.0);
    CHECK(p.value[1] == -2.0);
  }
  SUBCASE("zero gradient, decoupled decay") {
    AdamW<double> opt(store, {0.9, 0.999, 1e-8, 0.2});
    opt.step(grads, 0.1);
    CHECK(p.value[0] == doctest::Approx(1.0 * (1 - 0.1 * 0.2)));
    CHECK(p.value[1] == doctest::Approx(-2.0 * (1 - 0.1 * 0.2)));
  }
  SUBCASE("first step with a constant gradient moves by lr") {
    AdamW<double> opt(store, {0.9, 0.999, 1e-8, 0.0});
    grads[0].values() = {0.3, -4.0, 1e-3};
    opt.step(grads, 0.01);
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(1.0 - 0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));
    CHECK(p.value[2] == doctest::Approx(0.5 - 0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-12));
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("non-trainable parameters get no state and never move") {
    auto& frozen = store.add("enc.w", Tensor<double>(Shape{2}, 1.0));
    store.set_trainable("enc.", false);
    AdamW<double> opt(store, {});
    GradBuffer<double> g2(store);
    g2[1].fill(1.0);
    opt.step(g2, 0.1);
    CHECK(opt.state_count() == 1);
    CHECK_FALSE(opt.has_state(frozen));
    CHECK(frozen.value[0] == 1.0);
  }
}

TEST_CASE("cosine warmup schedule") {
  CHECK(cosine_warmup_lr(0, 5, 15, 1e-4) == 0.0);
  CHECK(cosine_warmup_lr(5, 5, 15, 1e-4) == doctest::Approx(1e-4));
  CHECK(cosine_warmup_lr(15, 5, 15, 1e-4) == doctest::Approx(0.0));
  CHECK(cosine_warmup_lr(10, 5, 15, 1e-4) == doctest::Approx(0.5e-4));
  CHECK(cosine_warmup_lr(2, 4, 10, 1.0) == doctest::Approx(0.5));
  double prev = 1.0;
  for (std::size_t s = 4; s <= 10; ++s) {
    const double lr = cosine_warmup_lr(s, 4, 10, 1.0);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(cosine_warmup_lr(11, 4, 10, 1.0), Error);
  CHECK_THROWS_AS(cosine_warmup_lr(1, 10, 10, 1.0), Error);
}

TEST_CASE("phase schedule helpers") {
  PhaseSchedule s{3, 4, 1e-3, 0.1};
  CHECK(s.steps_per_epoch(10) == 3);
  CHECK(schedule_lr(s, 0, 9) > 0.0);
  CHECK(mix_seed({1, 2, 3}) == mix_seed({1, 2, 3}));
  CHECK(mix_seed({1, 2, 3}) != mix_seed({1, 3, 2}));
  auto perm = shuffled_indices(50, 4);
  auto sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(sorted[i] == i);
  CHECK(perm == shuffled_indices(50, 4));
  PhaseSchedule bad{0, 4, 1e-3, 0.1};
  CHECK_THROWS_AS(bad.validate("x"), Error);
}

TEST_CASE("accumulate_step rejects non-finite losses before updating") {
  ParamStore<double> store;
  auto& p = store.add("p", Tensor<double>(Shape{1}, 1.0));
  AdamW<double> opt(store, {});
  GradBuffer<double> grads(store);
  try {
    accumulate_step(opt, grads, {0, 1}, 0.1, [&](Graph<double>& g, std::size_t i) {
      Var x = g.param(p);
      return i == 1 ? scale(g, x, std::numeric_limits<double>::quiet_NaN()) : x;
    });
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
  }
  CHECK(p.value[0] == 1.0);
  CHECK(opt.step_count() == 0);
}

TEST_CASE("fixed seed gives a bit-identical parameter trajectory") {
  auto run = [] {
    std::mt19937_64 rng(31);
    ParamStore<float> store;
    LayerConfig cfg = tiny_config();
    cfg.dropout = 0.2;
    EncoderLayer<float> layer(store, "enc", cfg, rng);
    AdamW<float> opt(store, {});
    GradBuffer<float> grads(store);
    std::mt19937_64 data(5);
    const auto x = random_tensor({4, cfg.d_model}, data).cast<float>();
    for (std::uint64_t step = 0; step < 5; ++step) {
      accumulate_step(opt, grads, {0, 1}, 1e-2, [&](Graph<float>& g, std::size_t s) {
        std::mt19937_64 drop(mix_seed({9, step, s}));
        Mode mode{true, &drop};
        return mse(g, layer.forward(g, g.constant(x), mode), g.constant(Tensor<float>(Shape{4, cfg.d_model})));
      });
    }
    return params_hash(store);
  };
  CHECK(run() == run());
}

TEST_CASE("layer config validation") {
  CHECK_NOTHROW(LayerConfig::desk().validate());
  CHECK_NOTHROW(LayerConfig{}.validate());
  LayerConfig c = LayerConfig::desk();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = LayerConfig::desk();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = LayerConfig::desk();
  c.enc_layers = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  nlohmann::json j = LayerConfig::desk();
  CHECK(j.get<LayerConfig>().ffn_dim == 256);
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  const auto dir = temp_dir("ckpt");
  std::mt19937_64 rng(1);
  ParamStore<float> a;
  a.add("enc.w", random_tensor({3, 4}, rng).cast<float>());
  a.add("dec.b", random_tensor({5}, rng).cast<float>());
  CheckpointInfo info{"unit", 42, {{"note", "x"}}};
  save_checkpoint(dir, a, info);
  CHECK(fs::exists(dir / "manifest.json"));

  ParamStore<float> b;
  b.add("enc.w", Tensor<float>(Shape{3, 4}));
  b.add("dec.b", Tensor<float>(Shape{5}));
  const auto got = load_checkpoint(dir, b);
  CHECK(got.tag == "unit");
  CHECK(got.seed == 42);
  CHECK(got.extra["note"] == "x");
  CHECK(params_hash(a) == params_hash(b));
  CHECK(read_checkpoint_info(dir).tag == "unit");

  ParamStore<float> wrong_shape;
  wrong_shape.add("enc.w", Tensor<float>(Shape{4, 3}));
  wrong_shape.add("dec.b", Tensor<float>(Shape{5}));
  try {
    load_checkpoint(dir, wrong_shape);
    FAIL("expected CheckpointMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CheckpointMismatch);
  }

  ParamStore<float> extra;
  extra.add("enc.w", Tensor<float>(Shape{3, 4}));
  extra.add("enc.extra", Tensor<float>(Shape{2}));
  CHECK_THROWS_AS(load_checkpoint(dir, extra, {"enc.", false}), Error);
  CHECK_NOTHROW(load_checkpoint(dir, extra, {"enc.", true}));
  CHECK(params_hash(extra, "enc.w") == params_hash(a, "enc."));

  ParamStore<double> wrong_dtype;
  wrong_dtype.add("enc.w", Tensor<double>(Shape{3, 4}));
  wrong_dtype.add("dec.b", Tensor<double>(Shape{5}));
  CHECK_THROWS_AS(load_checkpoint(dir, wrong_dtype), Error);

  // Overwriting replaces the directory as a whole.
  a[0].value.fill(2.0f);
  save_checkpoint(dir, a, info);
  load_checkpoint(dir, b);
  CHECK(b[0].value[5] == 2.0f);
  for (const auto& e : fs::directory_iterator(dir.parent_path())) {
    CHECK(e.path().filename().string().find(dir.filename().string() + ".tmp") == std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("atomic_write_file leaves no temp file") {
  const auto dir = temp_dir("atomic");
  fs::create_directories(dir);
  atomic_write_file(dir / "a.txt", "hello");
  atomic_write_file(dir / "a.txt", "world");
  std::ifstream in(dir / "a.txt");
  std::string s;
  in >> s;
  CHECK(s == "world");
  CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}) == 1);
  fs::remove_all(dir);
}
