#include <doctest.h>

#include <cmath>
#include <fstream>
#include <utility>

#include "sisc/data.hpp"
#include "sisc/io.hpp"
#include "sisc/sequencer.hpp"
#include "support.hpp"

using namespace sisc;
using sisc::testing::central_difference;
using sisc::testing::rel_error;
using sisc::testing::TempDir;

namespace {

// One unpooled cell of `conv_count` stages on an 8x8 input.
SequencerConfig one_cell(std::size_t channels, std::size_t conv_count, double dropout) {
  SequencerConfig c;
  c.cells = {};
  c.final_cell = CellConfig{channels, 3, dropout, 0.99, conv_count};
  c.input_size = 8;
  c.class_count = 2;
  return c;
}

SequencerConfig two_cell(std::size_t size, double dropout) {
  SequencerConfig c;
  c.cells = {CellConfig{4, 3, dropout, 0.99, 2}};
  c.final_cell = CellConfig{6, 3, dropout, 0.99, 1};
  c.input_size = size;
  return c;
}

double mean_nll(const Tensor<double>& probs, const std::vector<int>& labels) {
  double s = 0.0;
  for (std::size_t n = 0; n < labels.size(); ++n) s -= std::log(probs(n, static_cast<std::size_t>(labels[n]), 0, 0));
  return s / static_cast<double>(labels.size());
}

// Closed form from the configuration, written independently of the library.
std::size_t expected_parameters(const SequencerConfig& c) {
  std::size_t total = 0, cin = c.input_channels;
  auto add_cell = [&](const CellConfig& cell) {
    for (std::size_t s = 0; s < cell.conv_count; ++s) {
      total += cell.channels * cin * cell.kernel * cell.kernel + cell.channels + 2 * cell.channels;
      cin = cell.channels;
    }
  };
  for (const auto& cell : c.cells) add_cell(cell);
  add_cell(c.final_cell);
  return total + c.class_count * cin + c.class_count;
}

std::size_t max_error_over_probes(Sequencer<double>& model, const ForwardTrace<double>& trace,
                                  const std::vector<int>& labels, const Gradients<double>& grads,
                                  std::size_t probes, Rng& rng, double& worst) {
  auto params = model.parameters();
  REQUIRE(params.size() == grads.values.size());
  auto loss = [&] { return mean_nll(replay(model, trace), labels); };
  for (std::size_t t = 0; t < probes; ++t) {
    const auto p = rng.below(params.size());
    const auto i = rng.below(params[p].values.size());
    const double numeric = central_difference(params[p].values[i], loss);
    worst = std::max(worst, rel_error(grads.values[p][i], numeric));
  }
  return probes;
}

}  // namespace

TEST_SUITE("sequencer") {

TEST_CASE("standard config and validation") {
  const auto std_cfg = SequencerConfig::standard();
  CHECK(std_cfg.cell_count() == 4);
  CHECK(std_cfg.pooled_size() == 12);
  CHECK(std_cfg.violations().empty());

  auto bad = std_cfg;
  bad.input_size = 95;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.cells[0].kernel = 4;
  bad.final_cell.dropout_rate = 1.0;
  CHECK(bad.violations().size() == 3);
  Rng rng(1);
  CHECK_THROWS_AS(build_sequencer<float>(bad, rng), ConfigError);
}

TEST_CASE("config text round trip and parse errors") {
  auto c = SequencerConfig::standard();
  c.bn_epsilon = 1.0 / 3.0;
  c.cells[1].dropout_rate = 0.1;
  CHECK(SequencerConfig::from_text(c.to_text()) == c);
  CHECK_THROWS_AS(SequencerConfig::from_text(c.to_text() + "bogus = 1\n"), ParseError);
  CHECK_THROWS_AS(SequencerConfig::from_text(c.to_text() + "input_size = 96\n"), ParseError);
  CHECK_THROWS_AS(SequencerConfig::from_text("input_size = 96\n"), ParseError);
}

TEST_CASE("parameter count matches construction") {
  for (const auto& cfg : {SequencerConfig::standard(), two_cell(16, 0.1), one_cell(4, 3, 0.0)}) {
    Rng rng(2);
    auto model = build_sequencer<float>(cfg, rng);
    std::size_t trainable = 0, all = 0;
    for (const auto& t : model.tensors()) {
      all += t.values.size();
      if (t.trainable) trainable += t.values.size();
    }
    CHECK(parameter_count(cfg) == expected_parameters(cfg));
    CHECK(trainable == parameter_count(cfg));
    CHECK(all - trainable == buffer_count(cfg));
  }
}

TEST_CASE("build is deterministic per seed") {
  Rng a(42), b(42), c(43);
  const auto m1 = build_sequencer<float>(SequencerConfig::standard(), a);
  const auto m2 = build_sequencer<float>(SequencerConfig::standard(), b);
  const auto m3 = build_sequencer<float>(SequencerConfig::standard(), c);
  const auto t1 = m1.tensors(), t2 = m2.tensors(), t3 = m3.tensors();
  bool same = true, differs = false;
  for (std::size_t i = 0; i < t1.size(); ++i) {
    same = same && std::equal(t1[i].values.begin(), t1[i].values.end(), t2[i].values.begin());
    differs = differs || !std::equal(t1[i].values.begin(), t1[i].values.end(), t3[i].values.begin());
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("standard forward shapes and determinism") {
  Rng rng(3);
  const auto model = build_sequencer<float>(SequencerConfig::standard(), rng);
  const Tensor<float> zero(Shape{1, 1, 96, 96});
  const auto a = forward(model, zero);
  const auto b = forward(model, zero);
  CHECK(a.probs.shape() == Shape{1, 2, 1, 1});
  CHECK(a.probs.values() == b.probs.values());
  CHECK(a.trace.layer_count() == model.layer_count());
  CHECK(replay(model, a.trace).values() == a.probs.values());

  auto img = Tensor<float>::random_uniform(Shape{1, 1, 96, 96}, rng, 0, 1);
  Tensor<float> pair(Shape{2, 1, 96, 96});
  std::copy(img.data().begin(), img.data().end(), pair.data().begin());
  std::copy(img.data().begin(), img.data().end(), pair.data().begin() + 96 * 96);
  const auto p = forward(model, pair).probs;
  CHECK(p(0, 0, 0, 0) == p(1, 0, 0, 0));
  CHECK(p(0, 1, 0, 0) == p(1, 1, 0, 0));

  CHECK_THROWS_AS(forward(model, Tensor<float>(Shape{1, 1, 64, 64})), DataError);
  CHECK_THROWS_AS(forward(model, Tensor<float>(Shape{1, 3, 96, 96})), DataError);
}

TEST_CASE("probabilities sum to one at run-grade precision") {
  Rng rng(4);
  auto cfg = two_cell(32, 0.25);
  cfg.class_count = 3;
  auto model = build_sequencer<float>(cfg, rng);
  const auto batch = Tensor<float>::random_normal(Shape{5, 1, 32, 32}, rng);
  for (Mode mode : {Mode::train, Mode::infer}) {
    const auto probs = forward(model, batch, mode, rng).probs;
    for (std::size_t n = 0; n < 5; ++n) {
      double s = 0.0;
      for (std::size_t c = 0; c < 3; ++c) s += probs(n, c, 0, 0);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("end-to-end gradients match finite differences") {
  struct Case {
    const char* name;
    SequencerConfig cfg;
    std::size_t batch;
  };
  for (const auto& c : {Case{"one cell", one_cell(4, 3, 0.25), 3}, Case{"two cells", two_cell(8, 0.25), 3}}) {
    CAPTURE(c.name);
    Rng rng(5);
    auto model = build_sequencer<double>(c.cfg, rng);
    const auto batch = Tensor<double>::random_normal(Shape{c.batch, 1, c.cfg.input_size, c.cfg.input_size}, rng);
    std::vector<int> labels{0, 1, 1};
    auto fwd = forward(model, batch, Mode::train, rng);
    const auto grads = backward(model, fwd.trace, labels);
    CHECK(grads.loss == doctest::Approx(mean_nll(fwd.probs, labels)).epsilon(1e-12));
    double worst = 0.0;
    max_error_over_probes(model, fwd.trace, labels, grads, 150, rng, worst);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("backward guards the trace") {
  Rng rng(6);
  auto model = build_sequencer<double>(one_cell(2, 1, 0.0), rng);
  const auto batch = Tensor<double>::random_normal(Shape{2, 1, 8, 8}, rng);
  const std::vector<int> labels{0, 1};
  auto infer = forward(model, batch, Mode::infer, rng);
  CHECK_THROWS_AS(backward(model, infer.trace, labels), InternalError);
  auto fwd = forward(model, batch, Mode::train, rng);
  auto grads = backward(model, fwd.trace, labels);
  AdamState<double> adam;
  adam_step(model, grads, adam);
  CHECK_THROWS_AS(backward(model, fwd.trace, labels), InternalError);
  Rng other(6);
  auto twin = build_sequencer<double>(one_cell(2, 1, 0.0), other);
  auto fresh = forward(model, batch, Mode::train, rng);
  CHECK_THROWS_AS(backward(twin, fresh.trace, labels), InternalError);
}

TEST_CASE("gradients vanish at a minimal loss") {
  Rng rng(7);
  auto model = build_sequencer<double>(one_cell(3, 2, 0.0), rng);
  std::fill(model.head.weights.data().begin(), model.head.weights.data().end(), 0.0);
  model.head.bias = {1000.0, -1000.0};
  const auto batch = Tensor<double>::random_normal(Shape{2, 1, 8, 8}, rng);
  auto fwd = forward(model, batch, Mode::train, rng);
  const std::vector<int> labels{0, 0};
  const auto grads = backward(model, fwd.trace, labels);
  for (const auto& g : grads.values)
    for (double v : g) CHECK(std::abs(v) < 1e-8);
}

TEST_CASE("duplicating the batch leaves averaged gradients unchanged") {
  Rng rng(8);
  auto model = build_sequencer<double>(two_cell(8, 0.0), rng);
  const auto batch = Tensor<double>::random_normal(Shape{2, 1, 8, 8}, rng);
  Tensor<double> doubled(Shape{4, 1, 8, 8});
  std::copy(batch.data().begin(), batch.data().end(), doubled.data().begin());
  std::copy(batch.data().begin(), batch.data().end(), doubled.data().begin() + 128);
  const std::vector<int> l2{0, 1}, l4{0, 1, 0, 1};
  auto f2 = forward(model, batch, Mode::train, rng);
  const auto g2 = backward(model, f2.trace, l2);
  auto f4 = forward(model, doubled, Mode::train, rng);
  const auto g4 = backward(model, f4.trace, l4);
  double worst = 0.0;
  for (std::size_t p = 0; p < g2.values.size(); ++p)
    for (std::size_t i = 0; i < g2.values[p].size(); ++i)
      worst = std::max(worst, std::abs(g2.values[p][i] - g4.values[p][i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("adam: zero gradient, first step, scalar oracle, non-finite") {
  std::vector<double> w{1.0, -2.0, 3.0};
  std::vector<NamedSpan<double>> params{{"w", w}};
  Gradients<double> g;
  g.names = {"w"};
  g.values = {{0.0, 0.0, 0.0}};
  AdamState<double> st;
  adam_step<double>(params, g, st);
  CHECK(w == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(st.t == 1);

  // bias-corrected first step: lr * g / (|g| + eps), i.e. lr up to eps/|g|
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const double mag = std::pow(10.0, rng.uniform(-2.0, 3.0));
    const double grad = rng.bernoulli(0.5) ? mag : -mag;
    std::vector<double> x{0.5};
    std::vector<NamedSpan<double>> px{{"x", x}};
    Gradients<double> gx;
    gx.names = {"x"};
    gx.values = {{grad}};
    AdamState<double> s;
    s.lr = 1e-5;
    adam_step<double>(px, gx, s);
    const double step = std::abs(x[0] - 0.5);
    CHECK(std::abs(step - s.lr) <= 1e-6 * s.lr);
  }
  for (double grad : {1e-11, 1e-9, 3e-7}) {
    std::vector<double> x{0.0};
    std::vector<NamedSpan<double>> px{{"x", x}};
    Gradients<double> gx;
    gx.names = {"x"};
    gx.values = {{grad}};
    AdamState<double> s;
    adam_step<double>(px, gx, s);
    CHECK(-x[0] == doctest::Approx(s.lr * grad / (grad + s.eps)).epsilon(1e-12));
  }

  // two steps on f(x) = (x - 3)^2 against a hand-rolled update
  double x = 0.0, m = 0.0, v = 0.0;
  std::vector<double> xs{0.0};
  std::vector<NamedSpan<double>> px{{"x", xs}};
  AdamState<double> s;
  s.lr = 0.1;
  for (int t = 1; t <= 2; ++t) {
    const double grad = 2 * (x - 3);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    x -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    Gradients<double> gx;
    gx.names = {"x"};
    gx.values = {{2 * (xs[0] - 3)}};
    adam_step<double>(px, gx, s);
    CHECK(std::abs(xs[0] - x) < 1e-12);
  }
  for (const auto& vv : s.v)
    for (double e : vv) CHECK(e >= 0.0);

  Gradients<double> bad;
  bad.names = {"w"};
  bad.values = {{0.0, std::nan(""), 0.0}};
  const auto before = w;
  try {
    adam_step<double>(params, bad, st);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("w") != std::string::npos);
  }
  CHECK(w == before);
}

TEST_CASE("loss decreases over the first Adam steps on a fixed batch") {
  auto samples = synth_generate(16, 11, 16);
  const auto set = to_labeled(samples);
  Rng rng(12);
  SequencerConfig cfg;
  cfg.cells = {CellConfig{4, 3, 0.0, 0.99, 1}};
  cfg.final_cell = CellConfig{8, 3, 0.0, 0.99, 1};
  cfg.input_size = 16;
  auto model = build_sequencer<float>(cfg, rng);
  AdamState<float> adam;
  adam.lr = 1e-3;
  double previous = INFINITY;
  for (int step = 0; step < 5; ++step) {
    auto fwd = forward(model, set.images, Mode::train, rng);
    const auto grads = backward(model, fwd.trace, set.labels);
    CHECK(grads.loss < previous);
    previous = grads.loss;
    adam_step(model, grads, adam);
  }
}

TEST_CASE("training: history, determinism, separable task") {
  const auto samples = synth_generate(200, 21, 32);
  const auto all = to_labeled(samples);
  SequencerConfig cfg;
  // faster running-statistics tracking than the default suits a short run
  cfg.cells = {CellConfig{8, 3, 0.1, 0.9, 2}};
  cfg.final_cell = CellConfig{16, 3, 0.1, 0.9, 1};
  cfg.input_size = 32;

  std::vector<std::size_t> four{0, 1, 2, 3};
  LabeledImages<float> tiny{all.gather(four), {0, 1, 0, 1}};
  Rng rng(22);
  const auto start = build_sequencer<float>(cfg, rng);
  TrainSchedule one{1, 2, 1e-3, 5};
  CHECK(train(start, tiny, tiny, one).history.size() == 1);

  TrainSchedule sched{30, 32, 3e-3, 7};
  std::vector<EpochRecord> seen;
  const auto r1 = train(start, all, all, sched, [&](const EpochRecord& e) { seen.push_back(e); });
  const auto r2 = train(start, all, all, sched);
  CHECK(seen.size() == 30);
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i].epoch == i + 1);
  CHECK(encode_checkpoint(r1.last) == encode_checkpoint(r2.last));
  CHECK(encode_checkpoint(r1.best) == encode_checkpoint(r2.best));
  double best_train = 0.0;
  for (const auto& e : r1.history) best_train = std::max(best_train, e.train_accuracy);
  CHECK(best_train >= 0.99);
  CHECK(r1.history[r1.best_epoch - 1].val_accuracy >= 0.99);

  LabeledImages<float> empty;
  empty.images = Tensor<float>(Shape{0, 1, 32, 32});
  CHECK_THROWS_AS(train(start, empty, all, sched), DataError);
}

TEST_CASE("divergence is reported with its location") {
  const auto all = to_labeled(synth_generate(8, 3, 16));
  SequencerConfig cfg;
  cfg.cells = {};
  cfg.final_cell = CellConfig{2, 3, 0.0, 0.99, 1};
  cfg.input_size = 16;
  Rng rng(1);
  auto model = build_sequencer<float>(cfg, rng);
  model.head.weights[0] = std::numeric_limits<float>::infinity();
  try {
    train(model, all, all, TrainSchedule{2, 4, 1e-3, 0});
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    const std::string what = e.what();
    CHECK(what.find("epoch 1") != std::string::npos);
    CHECK(what.find("batch 0") != std::string::npos);
  }
}

TEST_CASE("prediction rule") {
  const std::vector<double> p{0.8, 0.2};
  CHECK(argmax_prediction(p).class_id == 0);
  CHECK(argmax_prediction(p).probability == 0.8);
  const std::vector<double> tie{0.5, 0.5};
  CHECK(argmax_prediction(tie).class_id == 0);
  const std::vector<double> later{0.2, 0.4, 0.4};
  CHECK(argmax_prediction(later).class_id == 1);

  Rng rng(31);
  const auto model = build_sequencer<float>(two_cell(16, 0.25), rng);
  const auto batch = Tensor<float>::random_normal(Shape{100, 1, 16, 16}, rng);
  const auto probs = forward(model, batch).probs;
  for (std::size_t n = 0; n < 100; ++n) {
    std::vector<std::size_t> one{n};
    const auto pred = predict(model, LabeledImages<float>{batch, {}}.gather(one));
    const int expect = probs(n, 1, 0, 0) > probs(n, 0, 0, 0) ? 1 : 0;
    CHECK(pred.class_id == expect);
    CHECK(pred.probability == probs(n, static_cast<std::size_t>(expect), 0, 0));
  }
  CHECK_THROWS_AS(predict(model, Tensor<float>(Shape{1, 1, 8, 8})), DataError);
}

TEST_CASE("checkpoint round trip and distinct load errors") {
  Rng rng(41);
  auto model = build_sequencer<float>(SequencerConfig::standard(), rng);
  // move running stats off their defaults
  const auto batch = Tensor<float>::random_normal(Shape{2, 1, 96, 96}, rng);
  forward(model, batch, Mode::train, rng);

  TempDir dir("ckpt");
  save_checkpoint(model, dir / "m.sisc");
  const auto loaded = load_checkpoint(dir / "m.sisc");
  CHECK(loaded.config == model.config);
  const auto a = std::as_const(model).tensors();
  const auto b = loaded.tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(std::equal(a[i].values.begin(), a[i].values.end(), b[i].values.begin(), b[i].values.end()));
  }
  CHECK(forward(loaded, batch).probs.values() == forward(model, batch).probs.values());
  CHECK(encode_checkpoint(loaded) == encode_checkpoint(model));

  const auto bytes = encode_checkpoint(model);
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
  CHECK_THROWS_AS(decode_checkpoint(cut), ChecksumError);
  std::vector<std::uint8_t> stub(bytes.begin(), bytes.begin() + 8);
  CHECK_THROWS_AS(decode_checkpoint(stub), TruncatedError);

  auto flipped = bytes;
  flipped[flipped.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(flipped), ChecksumError);

  auto reseal = [](std::vector<std::uint8_t> body) {
    body.resize(body.size() - 4);
    io::put_u32(body, io::crc32(body));
    return body;
  };
  auto versioned = bytes;
  versioned[4] = 9;
  CHECK_THROWS_AS(decode_checkpoint(reseal(versioned)), VersionError);

  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), FormatError);

  // config text claiming more channels than the blobs hold
  const std::uint32_t len = io::get_u32(bytes.data() + 8);
  std::string text(bytes.begin() + 12, bytes.begin() + 12 + len);
  const auto at = text.find("final.channels = 128");
  REQUIRE(at != std::string::npos);
  text.replace(at, 20, "final.channels = 129");
  std::vector<std::uint8_t> forged(bytes.begin(), bytes.begin() + 12);
  forged.insert(forged.end(), text.begin(), text.end());
  forged.insert(forged.end(), bytes.begin() + 12 + len, bytes.end());
  CHECK_THROWS_AS(decode_checkpoint(reseal(forged)), StructuralError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.sisc"), IoError);
}

TEST_CASE("precision conversion keeps identity and configuration") {
  Rng rng(51);
  const auto model = build_sequencer<float>(two_cell(16, 0.25), rng);
  const auto wide = convert_sequencer<double>(model);
  CHECK(wide.instance_id == model.instance_id);
  CHECK(wide.config == model.config);
  const auto back = convert_sequencer<float>(wide);
  CHECK(encode_checkpoint(back) == encode_checkpoint(model));
}

}  // TEST_SUITE
