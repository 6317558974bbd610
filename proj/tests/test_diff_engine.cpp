#include <cmath>
#include <functional>

#include "doctest.h"
#include "helpers.hpp"
#include "sdtm/diff_tree.hpp"
#include "sdtm/tape.hpp"

using namespace sdtm;
using namespace sdtm::test;

namespace {

Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.v) v = scale * rng.normal();
    return t;
}

using BuildFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Central finite differences against reverse-mode gradients for every element
// of every input.
void check_gradients(const std::vector<Tensor>& inputs, const BuildFn& build,
                     double h = 1e-4, double tol = 1e-4) {
    Tape tape;
    std::vector<Value> leaves;
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t));
    Value loss = build(tape, leaves);
    REQUIRE(tape.data(loss).numel() == 1);
    tape.backward(loss);

    auto eval = [&](const std::vector<Tensor>& points) {
        Tape t2;
        std::vector<Value> consts;
        for (const Tensor& t : points) consts.push_back(t2.constant(t));
        return t2.data(build(t2, consts)).v[0];
    };

    for (size_t i = 0; i < inputs.size(); ++i) {
        const Tensor& ad = tape.grad(leaves[i]);
        for (size_t j = 0; j < inputs[i].v.size(); ++j) {
            std::vector<Tensor> plus = inputs;
            std::vector<Tensor> minus = inputs;
            plus[i].v[j] += h;
            minus[i].v[j] -= h;
            double fd = (eval(plus) - eval(minus)) / (2 * h);
            double got = ad.v[j];
            double err = std::abs(got - fd) / std::max({1.0, std::abs(got), std::abs(fd)});
            CHECK(err < tol);
        }
    }
}

}  // namespace

TEST_CASE("softmax of zeros is uniform") {
    Tape tape;
    Value v = tape.constant(Tensor::row({0, 0, 0}));
    const Tensor& s = tape.data(tape.softmax_rows(v));
    for (double x : s.v) CHECK(x == doctest::Approx(1.0 / 3));
}

TEST_CASE("cross entropy of confident logits matches the reference value") {
    Tape tape;
    Value logits = tape.constant(Tensor::row({10, -10}));
    Value loss = tape.cross_entropy_mean(logits, {0});
    // log(1 + exp(-20)) evaluated with high precision.
    CHECK(tape.data(loss).v[0] == doctest::Approx(2.0611536181902037e-9).epsilon(1e-6));

    Tape t2;
    Value uniform = t2.constant(Tensor::row({0, 0, 0, 0}));
    CHECK(t2.data(t2.cross_entropy_mean(uniform, {2})).v[0] ==
          doctest::Approx(std::log(4.0)));
}

TEST_CASE("gradient of softmax total is zero") {
    Tape tape;
    Value x = tape.leaf(Tensor::row({0.3, -1.2, 2.0}));
    Value loss = tape.sum_all(tape.softmax_rows(x));
    tape.backward(loss);
    for (double g : tape.grad(x).v) CHECK(g == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("primitive gradients match central differences") {
    Rng rng(404);

    SUBCASE("add, mul, scale") {
        check_gradients({random_tensor({3, 4}, rng), random_tensor({3, 4}, rng),
                         Tensor::scalar(0.7)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value m = t.mul(t.add(in[0], in[1]), in[1]);
                            return t.sum_all(t.scale(t.scale_const(m, 1.3), in[2]));
                        });
    }
    SUBCASE("add_rowvec") {
        check_gradients({random_tensor({3, 4}, rng), random_tensor({1, 4}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value s = t.add_rowvec(in[0], in[1]);
                            return t.sum_all(t.mul(s, s));
                        });
    }
    SUBCASE("matmul all transpose modes") {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                Tensor a = ta ? random_tensor({4, 3}, rng) : random_tensor({3, 4}, rng);
                Tensor b = tb ? random_tensor({5, 4}, rng) : random_tensor({4, 5}, rng);
                check_gradients({a, b}, [ta, tb](Tape& t, const std::vector<Value>& in) {
                    Value m = t.matmul(in[0], in[1], ta, tb);
                    return t.sum_all(t.mul(m, m));
                });
            }
        }
    }
    SUBCASE("transpose and reshape") {
        check_gradients({random_tensor({3, 5}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value tr = t.transpose(in[0]);
                            Value rs = t.reshape(tr, {5 * 3});
                            return t.sum_all(t.mul(rs, rs));
                        });
    }
    SUBCASE("softmax") {
        check_gradients({random_tensor({2, 5}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value s = t.softmax_rows(in[0]);
                            return t.sum_all(t.mul(s, s));
                        });
    }
    SUBCASE("layer norm") {
        check_gradients({random_tensor({3, 6}, rng), random_tensor({1, 6}, rng),
                         random_tensor({1, 6}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value n = t.layer_norm_rows(in[0], in[1], in[2]);
                            return t.sum_all(t.mul(n, n));
                        });
    }
    SUBCASE("gelu") {
        check_gradients({random_tensor({3, 4}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            return t.sum_all(t.gelu(in[0]));
                        });
    }
    SUBCASE("relu away from the kink") {
        Tensor x = random_tensor({3, 4}, rng);
        for (double& v : x.v) {
            if (std::abs(v) < 0.05) v = 0.5;
        }
        check_gradients({x}, [](Tape& t, const std::vector<Value>& in) {
            return t.sum_all(t.relu(in[0]));
        });
    }
    SUBCASE("concat and slices") {
        check_gradients(
            {random_tensor({3, 4}, rng), random_tensor({3, 2}, rng),
             random_tensor({2, 6}, rng)},
            [](Tape& t, const std::vector<Value>& in) {
                Value cc = t.concat_cols(in[0], in[1]);      // [3,6]
                Value cr = t.concat_rows({cc, in[2]});       // [5,6]
                Value sc = t.slice_cols(cr, 1, 4);
                Value sr = t.slice_rows(sc, 1, 3);
                return t.sum_all(t.mul(sr, sr));
            });
    }
    SUBCASE("gather with duplicate rows") {
        check_gradients({random_tensor({4, 3}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value g = t.gather_rows(in[0], {0, 2, 2, 3});
                            return t.sum_all(t.mul(g, g));
                        });
    }
    SUBCASE("scatter_add with colliding destinations") {
        check_gradients({random_tensor({4, 3}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value s = t.scatter_add_rows(in[0], {1, 0, 1, 2}, 3);
                            return t.sum_all(t.mul(s, s));
                        });
    }
    SUBCASE("cross entropy") {
        check_gradients({random_tensor({3, 5}, rng)},
                        [](Tape& t, const std::vector<Value>& in) {
                            return t.cross_entropy_mean(in[0], {1, 4, 0});
                        });
    }
    SUBCASE("weighted sum") {
        check_gradients({random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                         Tensor::scalar(0.4), Tensor::scalar(-1.1)},
                        [](Tape& t, const std::vector<Value>& in) {
                            Value w = t.weighted_sum({in[0], in[1]}, {in[2], in[3]});
                            return t.sum_all(t.mul(w, w));
                        });
    }
}

TEST_CASE("weighted_tree_sum identity and analytic weight gradient") {
    Tape tape;
    Tensor values({1, 1}, {2.0});
    DiffTree t{{1}, tape.constant(values), 1};
    Value w = tape.leaf(Tensor::scalar(1.0));
    DiffTree sum = dtree_weighted_sum(tape, {t}, {w});
    CHECK(tape.data(sum.values).v == std::vector<double>{2.0});

    // d/dw || w * T ||^2 at w=1, T={1:[2]} is 8.
    Value loss = tape.sum_all(tape.mul(sum.values, sum.values));
    tape.backward(loss);
    CHECK(tape.grad(w).v[0] == doctest::Approx(8.0));
}

TEST_CASE("coalesce backward copies the upstream gradient to every summand") {
    Tape tape;
    Value src = tape.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
    Value out = tape.scatter_add_rows(src, {0, 0}, 1);
    Value loss = tape.sum_all(tape.mul(out, out));
    tape.backward(loss);
    const Tensor& g = tape.grad(src);
    CHECK(g.v[0] == g.v[2]);
    CHECK(g.v[1] == g.v[3]);
}

TEST_CASE("diff tree ops match the plain sparse ops") {
    EmbeddingTable table = test_table(14, 4);
    Rng rng(61);
    for (int trial = 0; trial < 100; ++trial) {
        SymbolTree ta = random_symbol_tree(4, 14, rng);
        SymbolTree tb = random_symbol_tree(4, 14, rng);
        SparseTree a = from_symbol_tree(ta, table);
        SparseTree b = from_symbol_tree(tb, table);
        std::vector<double> s = table.embed(3);

        Tape tape;
        DiffTree da = dtree_from_sparse(tape, a);
        DiffTree db = dtree_from_sparse(tape, b);
        CHECK(dtree_to_sparse(tape, dtree_left(tape, da)) == op_left(a));
        CHECK(dtree_to_sparse(tape, dtree_right(tape, da)) == op_right(a));
        Value root = tape.constant(Tensor::row(s));
        CHECK(dtree_to_sparse(tape, dtree_cons(tape, da, db, root, 16)) ==
              op_cons(a, b, s));

        double u = rng.uniform(), v = rng.uniform();
        double lo = std::min(u, v), hi = std::max(u, v);
        OpWeights w{lo, hi - lo, 1.0 - hi};
        Value wv = tape.constant(Tensor::row({w.w_left, w.w_right, w.w_cons}));
        DiffInterpreterArgs args{da, da, da, db, root};
        SparseTree diff_out = dtree_to_sparse(
            tape, dtree_interpret(tape, wv, args, 16, false));
        SparseTree plain_out = interpret(w, {a, a, a, b, s}, 16);
        REQUIRE(diff_out.indices() == plain_out.indices());
        for (size_t k = 0; k < diff_out.size(); ++k) {
            for (int c = 0; c < 4; ++c) {
                CHECK(diff_out.row(k)[c] ==
                      doctest::Approx(plain_out.row(k)[c]).epsilon(1e-12));
            }
        }

        size_t k = 1 + rng.uniform_int(a.size());
        CHECK(dtree_to_sparse(tape, dtree_prune_topk(tape, da, k)) == prune_topk(a, k));
    }
}

TEST_CASE("interpreter gradients flow through weights, values and root") {
    Rng rng(88);
    Tensor left_vals = random_tensor({3, 2}, rng);
    Tensor right_vals = random_tensor({2, 2}, rng);
    Tensor root = random_tensor({1, 2}, rng);
    Tensor wlogits = random_tensor({1, 3}, rng);

    check_gradients(
        {left_vals, right_vals, root, wlogits},
        [](Tape& t, const std::vector<Value>& in) {
            DiffTree a{{1, 2, 3}, in[0], 2};
            DiffTree b{{1, 3}, in[1], 2};
            Value w = t.softmax_rows(in[3]);
            DiffInterpreterArgs args{a, b, a, b, in[2]};
            DiffTree out = dtree_interpret(t, w, args, 16, false);
            return t.sum_all(t.mul(out.values, out.values));
        });
}

TEST_CASE("two backward passes are rejected") {
    Tape tape;
    Value x = tape.leaf(Tensor::scalar(2.0));
    Value loss = tape.mul(x, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), Error);
}

TEST_CASE("forward and backward are bitwise deterministic") {
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tape tape;
        Value a = tape.leaf(random_tensor({4, 4}, rng));
        Value b = tape.leaf(random_tensor({4, 4}, rng));
        Value loss = tape.sum_all(tape.softmax_rows(tape.matmul(a, b)));
        tape.backward(loss);
        std::vector<double> out = {tape.data(loss).v[0]};
        for (double g : tape.grad(a).v) out.push_back(g);
        return out;
    };
    CHECK(run(5) == run(5));
    CHECK(run(5) != run(6));
}

TEST_CASE("shape errors name the mismatching shapes") {
    Tape tape;
    Value a = tape.constant(Tensor({2, 3}));
    Value b = tape.constant(Tensor({3, 2}));
    CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("[2x3]"), ShapeError);
}
