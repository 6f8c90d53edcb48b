#include "latrescore/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <functional>

#include "catch2/catch_amalgamated.hpp"
#include "latrescore/checkpoint.hpp"
#include "latrescore/lattice_io.hpp"
#include "latrescore/rng.hpp"

using namespace latrescore;

namespace {

Tensor full_mask(const Shape &s) { return Tensor(s, 1.0); }

}  // namespace

TEST_CASE("masked softmax of zeros is uniform", "[tensor]") {
  Tape tape;
  Value x = tape.input(Tensor(Shape{3}), false);
  Value m = tape.input(full_mask(Shape{3}), false);
  Value y = tape.masked_softmax(x, m);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(tape.value(y)[i] == Catch::Approx(1.0 / 3).epsilon(1e-15));
  }
}

TEST_CASE("masked softmax zeroes masked slots and renormalizes", "[tensor]") {
  Tape tape;
  Tensor x(Shape{4});
  x.data = {1.0, 2.0, 3.0, 50.0};
  Tensor m(Shape{4});
  m.data = {1.0, 1.0, 1.0, 0.0};
  Value y = tape.masked_softmax(tape.input(x, true), tape.input(m));
  const Tensor &out = tape.value(y);
  REQUIRE(out[3] == 0.0);
  REQUIRE(out[0] + out[1] + out[2] == Catch::Approx(1.0).epsilon(1e-12));

  // Fully masked row -> all zeros.
  Tape t2;
  Value y2 = t2.masked_softmax(t2.input(x), t2.input(Tensor(Shape{4})));
  for (int i = 0; i < 4; ++i) REQUIRE(t2.value(y2)[i] == 0.0);
}

TEST_CASE("bce with logit 0 target 1 is ln 2", "[tensor]") {
  Tape tape;
  Value z = tape.input(Tensor(Shape{1}), true);
  Value loss = tape.bce_with_logits(z, Tensor(Shape{1}, 1.0),
                                    full_mask(Shape{1}));
  REQUIRE(tape.value(loss).item() ==
          Catch::Approx(std::log(2.0)).epsilon(1e-12));
  // Empty mask: zero loss, zero gradient.
  Tape t2;
  Value z2 = t2.input(Tensor(Shape{3}, 5.0), true);
  Value l2 = t2.bce_with_logits(z2, Tensor(Shape{3}, 1.0), Tensor(Shape{3}));
  REQUIRE(t2.value(l2).item() == 0.0);
  t2.backward(l2);
  for (int i = 0; i < 3; ++i) REQUIRE(t2.grad(z2)[i] == 0.0);
}

TEST_CASE("layer_norm of a constant row is zero before affine", "[tensor]") {
  Tape tape;
  Tensor x(Shape{2, 4}, 3.25);
  Tensor gain(Shape{4}, 2.0);
  Tensor bias(Shape{4});
  bias.data = {0.5, -0.5, 1.0, 0.0};
  Value y = tape.layer_norm(tape.input(x, true), tape.input(gain, true),
                            tape.input(bias, true));
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < 4; ++j) {
      REQUIRE(tape.value(y)[r * 4 + j] == bias[j]);
    }
  }
}

TEST_CASE("gradient of a sum is ones", "[tensor]") {
  Tape tape;
  Tensor x(Shape{5});
  x.data = {1, -2, 3, -4, 5};
  Value vx = tape.input(x, true);
  Value loss = tape.scale(tape.reduce_mean(vx), 5.0);  // sum
  tape.backward(loss);
  for (int i = 0; i < 5; ++i) REQUIRE(tape.grad(vx)[i] == Catch::Approx(1.0));
}

TEST_CASE("sigmoid dot-product gradient matches the analytic form",
          "[tensor]") {
  Rng rng(601);
  Tensor w = randn(Shape{1, 4}, rng);
  Tensor x = randn(Shape{4, 1}, rng);
  Tape tape;
  Value vw = tape.input(w, true);
  Value vx = tape.input(x, false);
  Value s = tape.sigmoid(tape.matmul(vw, vx));
  Value loss = tape.reduce_mean(s);
  tape.backward(loss);
  double dot = 0.0;
  for (int i = 0; i < 4; ++i) dot += w[i] * x[i];
  double sig = 1.0 / (1.0 + std::exp(-dot));
  for (int i = 0; i < 4; ++i) {
    REQUIRE(tape.grad(vw)[i] ==
            Catch::Approx(sig * (1 - sig) * x[i]).epsilon(1e-10));
  }
}

TEST_CASE("broadcast add and mul agree with manual loops", "[tensor]") {
  Rng rng(603);
  Tensor a = randn(Shape{2, 3, 4}, rng);
  Tensor b = randn(Shape{4}, rng);
  Tape tape;
  Value va = tape.input(a, true);
  Value vb = tape.input(b, true);
  Value sum = tape.add(va, vb);
  Value prod = tape.mul(va, vb);
  for (int i = 0; i < 2 * 3; ++i) {
    for (int j = 0; j < 4; ++j) {
      REQUIRE(tape.value(sum)[i * 4 + j] == a[i * 4 + j] + b[j]);
      REQUIRE(tape.value(prod)[i * 4 + j] == a[i * 4 + j] * b[j]);
    }
  }
  // Gradient of sum reduces over broadcast dims.
  Value loss = tape.scale(tape.reduce_mean(sum), 24.0);
  tape.backward(loss);
  for (int j = 0; j < 4; ++j) REQUIRE(tape.grad(vb)[j] == Catch::Approx(6.0));
}

TEST_CASE("matmul matches a hand-computed product and broadcasts",
          "[tensor]") {
  Tape tape;
  Tensor a(Shape{2, 2});
  a.data = {1, 2, 3, 4};
  Tensor b(Shape{2, 2});
  b.data = {5, 6, 7, 8};
  Value c = tape.matmul(tape.input(a), tape.input(b));
  REQUIRE(tape.value(c).data == std::vector<double>{19, 22, 43, 50});

  // Batched lhs against shared rhs.
  Rng rng(605);
  Tensor batch = randn(Shape{3, 2, 2}, rng);
  Value vb2 = tape.matmul(tape.input(batch), tape.input(b));
  for (int bi = 0; bi < 3; ++bi) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        double expect = 0.0;
        for (int l = 0; l < 2; ++l) {
          expect += batch[bi * 4 + i * 2 + l] * b[l * 2 + j];
        }
        REQUIRE(tape.value(vb2)[bi * 4 + i * 2 + j] ==
                Catch::Approx(expect).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("two-layer MLP gradients match finite differences", "[tensor]") {
  Rng rng(607);
  std::vector<Tensor> params{randn(Shape{6, 8}, rng, 0.5),
                             randn(Shape{8}, rng, 0.5),
                             randn(Shape{8, 3}, rng, 0.5)};
  Tensor x = randn(Shape{4, 6}, rng);
  Tensor targets(Shape{4, 3}, 1.0);

  auto forward = [&](const std::vector<Tensor> &p, Tape *tape,
                     std::vector<Value> *handles) {
    Value w1 = tape->input(p[0], true);
    Value b1 = tape->input(p[1], true);
    Value w2 = tape->input(p[2], true);
    if (handles) *handles = {w1, b1, w2};
    Value h = tape->relu(tape->add(tape->matmul(tape->input(x), w1), b1));
    Value z = tape->matmul(h, w2);
    return tape->bce_with_logits(z, targets, full_mask(Shape{4, 3}));
  };
  Tape tape;
  std::vector<Value> handles;
  Value loss = forward(params, &tape, &handles);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (Value h : handles) analytic.push_back(tape.grad(h));

  double err = grad_check(
      [&](const std::vector<Tensor> &p) {
        Tape t;
        return t.value(forward(p, &t, nullptr)).item();
      },
      params, analytic);
  REQUIRE(err < 1e-7);
}

TEST_CASE("grad_check on a quadratic is exact to rounding", "[tensor]") {
  Rng rng(609);
  std::vector<Tensor> params{randn(Shape{10}, rng)};
  auto f = [](const std::vector<Tensor> &p) {
    double s = 0.0;
    for (double v : p[0].data) s += v * v;
    return s;
  };
  std::vector<Tensor> analytic{params[0]};
  for (auto &v : analytic[0].data) v *= 2.0;
  REQUIRE(grad_check(f, params, analytic) < 1e-9);
}

TEST_CASE("transpose, reshape and concat round trips", "[tensor]") {
  Rng rng(611);
  Tensor a = randn(Shape{2, 3, 4}, rng);
  Tape tape;
  Value va = tape.input(a, true);
  Value t = tape.transpose(va, {1, 0, 2});
  REQUIRE(tape.value(t).shape == Shape{3, 2, 4});
  REQUIRE(tape.value(t)[(1 * 2 + 0) * 4 + 2] == a[(0 * 3 + 1) * 4 + 2]);
  Value back = tape.transpose(t, {1, 0, 2});
  REQUIRE(tape.value(back).data == a.data);

  Value r = tape.reshape(va, Shape{6, 4});
  REQUIRE(tape.value(r).data == a.data);

  Tensor b = randn(Shape{2, 1, 4}, rng);
  Value cat = tape.concat({va, tape.input(b, true)}, 1);
  REQUIRE(tape.value(cat).shape == Shape{2, 4, 4});
  REQUIRE(tape.value(cat)[(0 * 4 + 3) * 4 + 1] == b[(0 * 1 + 0) * 4 + 1]);

  // Gradients flow through all three.
  Value loss = tape.reduce_mean(cat);
  tape.backward(loss);
  REQUIRE(tape.grad(va)[0] == Catch::Approx(1.0 / 32));
}

TEST_CASE("embedding gather forwards rows and scatters grads", "[tensor]") {
  Tensor table(Shape{5, 3});
  for (int i = 0; i < 15; ++i) table[i] = i;
  Tape tape;
  Value vt = tape.input(table, true);
  Value got = tape.embedding_gather(vt, {4, 0, 4}, Shape{3});
  REQUIRE(tape.value(got).shape == Shape{3, 3});
  REQUIRE(tape.value(got)[0] == 12.0);
  REQUIRE(tape.value(got)[3] == 0.0);
  Value loss = tape.scale(tape.reduce_mean(got), 9.0);
  tape.backward(loss);
  // Row 4 was gathered twice.
  REQUIRE(tape.grad(vt)[4 * 3 + 0] == Catch::Approx(2.0));
  REQUIRE(tape.grad(vt)[0 * 3 + 0] == Catch::Approx(1.0));
  REQUIRE(tape.grad(vt)[1 * 3 + 0] == 0.0);
  REQUIRE_THROWS_AS(tape.embedding_gather(vt, {5}, Shape{1}), Error);
}

TEST_CASE("masked positions receive exactly zero gradient", "[tensor]") {
  Rng rng(613);
  Tensor x = randn(Shape{2, 4}, rng);
  Tensor mask(Shape{2, 4}, 1.0);
  mask[1] = 0.0;
  mask[6] = 0.0;
  Tape tape;
  Value vx = tape.input(x, true);
  Value sm = tape.masked_softmax(vx, tape.input(mask));
  Value loss = tape.reduce_mean(tape.mul(sm, sm));
  tape.backward(loss);
  REQUIRE(tape.grad(vx)[1] == 0.0);
  REQUIRE(tape.grad(vx)[6] == 0.0);
  REQUIRE(tape.grad(vx)[0] != 0.0);
}

TEST_CASE("softmax_xent loss and gradient", "[tensor]") {
  Rng rng(615);
  Tensor logits = randn(Shape{3, 5}, rng);
  std::vector<int64_t> targets{2, 0, 4};
  std::vector<double> mask{1.0, 1.0, 0.0};
  Tape tape;
  Value vz = tape.input(logits, true);
  Value loss = tape.softmax_xent(vz, targets, mask);
  tape.backward(loss);
  std::vector<Tensor> analytic{tape.grad(vz)};
  double err = grad_check(
      [&](const std::vector<Tensor> &p) {
        Tape t;
        return t.value(t.softmax_xent(t.input(p[0], true), targets, mask))
            .item();
      },
      {logits}, analytic);
  REQUIRE(err < 1e-8);
  // Masked row has zero gradient.
  for (int j = 0; j < 5; ++j) REQUIRE(analytic[0][2 * 5 + j] == 0.0);
}

TEST_CASE("dropout replays bit-identically from its key", "[tensor]") {
  Rng rng(617);
  Tensor x = randn(Shape{64}, rng);
  uint64_t key = derive_seed(1, "dropout-test");
  Tape t1, t2;
  Value a = t1.dropout(t1.input(x), 0.5, key);
  Value b = t2.dropout(t2.input(x), 0.5, key);
  REQUIRE(t1.value(a).data == t2.value(b).data);
  int zeros = 0;
  for (double v : t1.value(a).data) zeros += v == 0.0;
  REQUIRE(zeros > 10);
  REQUIRE(zeros < 55);
  // Survivors are scaled by 1/(1-rate).
  for (int i = 0; i < 64; ++i) {
    double v = t1.value(a)[i];
    if (v != 0.0) REQUIRE(v == Catch::Approx(x[i] * 2.0));
  }
}

TEST_CASE("adam with zero gradients leaves params unchanged", "[tensor]") {
  AdamState state;
  state.config.lr = 0.1;
  std::map<std::string, Tensor> params{{"w", Tensor(Shape{3}, 1.5)}};
  std::map<std::string, Tensor> grads{{"w", Tensor(Shape{3}, 0.0)}};
  adam_step(state, params, grads);
  for (double v : params["w"].data) REQUIRE(v == 1.5);
}

TEST_CASE("adam first step moves by about lr", "[tensor]") {
  AdamState state;
  state.config.lr = 0.1;
  std::map<std::string, Tensor> params{{"w", Tensor(Shape{1}, 2.0)}};
  std::map<std::string, Tensor> grads{{"w", Tensor(Shape{1}, 1.0)}};
  adam_step(state, params, grads);
  REQUIRE(params["w"][0] == Catch::Approx(1.9).margin(1e-6));
}

TEST_CASE("adam descends a convex quadratic", "[tensor]") {
  AdamState state;
  state.config.lr = 0.05;
  state.config.warmup_steps = 10;
  std::map<std::string, Tensor> params{{"w", Tensor(Shape{4}, 3.0)}};
  auto loss_of = [&]() {
    double s = 0.0;
    for (double v : params["w"].data) s += v * v;
    return s;
  };
  int improved = 0;
  double prev = loss_of();
  for (int step = 0; step < 100; ++step) {
    std::map<std::string, Tensor> grads{{"w", params["w"]}};
    for (auto &v : grads["w"].data) v *= 2.0;
    adam_step(state, params, grads);
    double now = loss_of();
    if (now < prev) improved++;
    prev = now;
  }
  REQUIRE(improved >= 95);
  REQUIRE(prev < 1.0);
}

TEST_CASE("adam warmup schedule is linear then constant", "[tensor]") {
  AdamConfig c;
  c.lr = 1.0;
  c.warmup_steps = 4;
  REQUIRE(adam_lr_at(c, 1) == Catch::Approx(0.25));
  REQUIRE(adam_lr_at(c, 2) == Catch::Approx(0.5));
  REQUIRE(adam_lr_at(c, 4) == Catch::Approx(1.0));
  REQUIRE(adam_lr_at(c, 400) == Catch::Approx(1.0));
}

TEST_CASE("identical seeds give bit-identical losses", "[tensor]") {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    Tensor x = randn(Shape{4, 6}, rng);
    Tensor w = randn(Shape{6, 2}, rng);
    Tape tape;
    Value z = tape.matmul(tape.input(x), tape.input(w, true));
    Value loss =
        tape.bce_with_logits(z, Tensor(Shape{4, 2}, 1.0),
                             Tensor(Shape{4, 2}, 1.0));
    return tape.value(loss).item();
  };
  REQUIRE(run(99) == run(99));
  REQUIRE(run(99) != run(100));
}

TEST_CASE("shape errors are reported", "[tensor]") {
  Tape tape;
  Value a = tape.input(Tensor(Shape{2, 3}));
  Value b = tape.input(Tensor(Shape{4, 2}));
  REQUIRE_THROWS_AS(tape.matmul(a, b), ShapeMismatchError);
  REQUIRE_THROWS_AS(tape.add(a, tape.input(Tensor(Shape{5}))),
                    ShapeMismatchError);
  Value scalar_loss = tape.reduce_mean(a);
  REQUIRE_THROWS_AS(tape.backward(scalar_loss), DisconnectedLossError);
  REQUIRE_THROWS_AS(tape.backward(Value{9999}), DisconnectedLossError);
}

TEST_CASE("debug tape rejects non-finite values", "[tensor]") {
  Tape tape(/*debug_checks=*/true);
  Tensor x(Shape{2}, 1e308);
  Value vx = tape.input(x, false);
  REQUIRE_THROWS_AS(tape.add(vx, vx), NonFiniteValueError);
}

TEST_CASE("checkpoint round trip is bit exact", "[tensor]") {
  Rng rng(619);
  Checkpoint ckpt;
  ckpt.tensors["alpha"] = randn(Shape{7, 3}, rng);
  ckpt.tensors["beta"] = randn(Shape{11}, rng, 1e12);
  ckpt.tensors["gamma/weight"] = randn(Shape{2, 2, 2}, rng, 1e-12);
  ckpt.meta = {{"step", 42}, {"seed", 7}, {"config", {{"dim", 64}}}};
  std::string path = "test_ckpt.bin";
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  REQUIRE(back.tensors.size() == 3);
  for (const auto &[name, t] : ckpt.tensors) {
    REQUIRE(back.tensors.at(name) == t);
  }
  REQUIRE(back.meta == ckpt.meta);
  // Re-saving produces identical bytes.
  std::string path2 = "test_ckpt2.bin";
  save_checkpoint(back, path2);
  REQUIRE(read_file(path) == read_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}
