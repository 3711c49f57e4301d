#include <cmath>

#include <doctest.h>

#include "denoiser.hpp"
#include "nn/gradcheck.hpp"
#include "support.hpp"

using namespace unlasting;
using namespace unlasting::model;
using data::Control;
using data::GeneKnockout;
using data::Molecule;

namespace {

ArchConfig tiny_arch(std::size_t n = 6, std::size_t mol_dim = 3, std::size_t T = 50) {
  ArchConfig a;
  a.n_genes = n;
  a.mol_dim = mol_dim;
  a.n_cell_types = 2;
  a.diffusion_steps = T;
  a.gene_dim = 6;
  a.block_dim = 8;
  a.hidden = 8;
  a.time_dim = 6;
  a.cell_dim = 4;
  return a;
}

grn::Grn ring(std::size_t n) {
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, (i + 1) % n) = a((i + 1) % n, i) = 1;
  return grn::Grn(a);
}

Molecule molecule(double dose) {
  Molecule m;
  m.molecule_id = "m";
  m.embedding = Eigen::Vector3d(0.3, -0.2, 0.8);
  m.dose = dose;
  return m;
}

struct Fixture {
  Rng rng{17};
  data::ExpressionDataset ds = testing::toy_dataset(rng);
  data::ExpressionDataset scaled = data::scale_unit(ds, ds.values.maxCoeff());
  std::vector<TrainExample> examples = training_examples(scaled);
  ControlStatsMap stats = data::control_stats_by_type(scaled);
  diffusion::DiffusionSchedule sched = diffusion::make_schedule(50);

  std::vector<const TrainExample*> pick(std::initializer_list<std::size_t> idx) const {
    std::vector<const TrainExample*> out;
    for (auto i : idx) out.push_back(&examples[i]);
    return out;
  }
};

}  // namespace

TEST_SUITE("denoiser") {
  TEST_CASE("time features are sinusoids of scaled step") {
    const auto f = time_features(25, 50, 6);
    CHECK(f[0] == doctest::Approx(std::sin(500.0)).epsilon(1e-14));
    CHECK(f[3] == doctest::Approx(std::cos(500.0)).epsilon(1e-14));
    CHECK(time_features(0, 50, 6)[4] == 1.0);
    CHECK_THROWS_AS(time_features(51, 50, 6), Error);
  }

  TEST_CASE("denoise is deterministic with length N") {
    Denoiser d(tiny_arch(), ring(6), {}, 3);
    const Vector x = Vector::LinSpaced(6, 0, 1);
    const Conditioning c{1, Control{}, std::nullopt};
    const auto a = d.denoise(x, 10, c);
    CHECK(a.size() == 6);
    CHECK(a == d.denoise(x, 10, c));
    Denoiser same(tiny_arch(), ring(6), {}, 3);
    CHECK(same.denoise(x, 10, c) == a);
  }

  TEST_CASE("knockout changes only the knocked-out rows of the condition embedding") {
    Denoiser d(tiny_arch(), ring(6), {}, 4);
    const Vector x = Vector::LinSpaced(6, 0.1, 0.9);
    const auto ctrl = d.condition_embed(x, 7, {0, Control{}, std::nullopt});
    for (auto targets : {std::vector<std::size_t>{2}, std::vector<std::size_t>{1, 4}}) {
      const auto ko = d.condition_embed(x, 7, {0, GeneKnockout{targets}, std::nullopt});
      for (Eigen::Index i = 0; i < 6; ++i) {
        const bool hit = std::find(targets.begin(), targets.end(), std::size_t(i)) != targets.end();
        if (hit)
          CHECK(ko.row(i) != ctrl.row(i));
        else
          CHECK(ko.row(i) == ctrl.row(i));
      }
    }
  }

  TEST_CASE("knocked-out gene sees a zero embedding") {
    Denoiser d(tiny_arch(), ring(6), {}, 5);
    const Vector x = Vector::Zero(6);
    // Row 2 of a knockout equals what Control would produce with gene 2's embedding zeroed.
    const auto ko = d.condition_embed(x, 3, {0, GeneKnockout{{2}}, std::nullopt});
    d.params().value(d.params().find("gene.gene_emb")).row(2).setZero();
    const auto zeroed = d.condition_embed(x, 3, {0, Control{}, std::nullopt});
    CHECK((ko.row(2) - zeroed.row(2)).cwiseAbs().maxCoeff() <= 1e-15);
  }

  TEST_CASE("molecule branch: dose matters, control signal required") {
    Denoiser d(tiny_arch(), ring(6), {}, 6);
    const Vector x = Vector::Constant(6, 0.3);
    const Vector ctrl = Vector::Constant(6, 0.5);
    const auto e0 = d.condition_embed(x, 5, {0, molecule(0.0), ctrl});
    const auto e1 = d.condition_embed(x, 5, {0, molecule(10.0), ctrl});
    CHECK((e0 - e1).cwiseAbs().maxCoeff() > 1e-8);
    try {
      d.condition_embed(x, 5, {0, molecule(1.0), std::nullopt});
      FAIL("expected argument error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::argument);
    }
    Denoiser no_ctrl(tiny_arch(), ring(6), {true, false}, 6);
    CHECK_NOTHROW(no_ctrl.condition_embed(x, 5, {0, molecule(1.0), std::nullopt}));
  }

  TEST_CASE("grn block with self-loops and identity heads reduces to the readout") {
    auto arch = tiny_arch();
    arch.gat_layers = 1;
    Denoiser d(arch, grn::Grn::identity(6), {}, 7);
    auto& ps = d.params();
    for (std::size_t h = 0; h < arch.heads; ++h)
      ps.value(ps.find("gene.gat0." + std::to_string(h) + ".w")) = nn::Matrix::Identity(6, 6);
    Rng rng(1);
    const nn::Matrix g = testing::random_matrix(rng, 6, 6);
    ps.value(ps.find("gene.readout_b")) = testing::random_matrix(rng, 6, 1);
    const auto out = d.grn_block(g, {0, Control{}, std::nullopt});
    const auto& w = ps.value(ps.find("gene.readout_w"));
    const auto& b = ps.value(ps.find("gene.readout_b"));
    for (Eigen::Index i = 0; i < 6; ++i) CHECK(out[i] == doctest::Approx(w.row(i).dot(g.row(i)) + b(i, 0)).epsilon(1e-13));
  }

  TEST_CASE("grn block is permutation equivariant") {
    auto arch = tiny_arch(4);
    Denoiser d(arch, ring(4), {}, 8);
    Rng rng(2);
    const nn::Matrix g = testing::random_matrix(rng, 4, 6);
    const auto out = d.grn_block(g, {0, Control{}, std::nullopt});
    const std::vector<Eigen::Index> perm{2, 0, 3, 1};
    Eigen::MatrixXi pa(4, 4);
    nn::Matrix pg(4, 6);
    for (int i = 0; i < 4; ++i) {
      pg.row(i) = g.row(perm[i]);
      for (int j = 0; j < 4; ++j) pa(i, j) = d.graph().adjacency()(perm[i], perm[j]);
    }
    Denoiser p(arch, grn::Grn(pa), {}, 8);
    const auto w = d.params().value(d.params().find("gene.readout_w"));
    nn::Matrix pw(4, 6);
    for (int i = 0; i < 4; ++i) pw.row(i) = w.row(perm[i]);
    p.params().value(p.params().find("gene.readout_w")) = pw;
    const auto pout = p.grn_block(pg, {0, Control{}, std::nullopt});
    for (int i = 0; i < 4; ++i) CHECK(pout[i] == doctest::Approx(out[perm[i]]).epsilon(1e-12));
  }

  TEST_CASE("no_grn swaps in the identity graph for molecules only") {
    Denoiser full(tiny_arch(), ring(6), {}, 9);
    Denoiser ablated(tiny_arch(), ring(6), {false, true}, 9);
    Rng rng(3);
    const nn::Matrix g = testing::random_matrix(rng, 6, 6);
    const Conditioning ko{0, GeneKnockout{{1}}, std::nullopt};
    const Conditioning mol{0, molecule(1.0), Vector::Zero(6)};
    CHECK(full.grn_block(g, ko) == ablated.grn_block(g, ko));
    CHECK(full.grn_block(g, mol) != ablated.grn_block(g, mol));
    Denoiser iso(tiny_arch(), grn::Grn::identity(6), {}, 9);
    CHECK(ablated.grn_block(g, mol) == iso.grn_block(g, mol));
  }

  TEST_CASE("full training loss passes the finite-difference check") {
    Fixture fx;
    for (DenoiserFlags flags : {DenoiserFlags{}, DenoiserFlags{true, false}, DenoiserFlags{false, true}}) {
      Denoiser d(tiny_arch(), ring(6), flags, 11);
      Rng rng(5);
      const auto batch = fx.pick({0, 13, 20, 26, 30, 5, 18, 33});
      const auto drawn = draw_batch(d, batch, fx.stats, fx.sched, rng);
      nn::LossFn f = [&](const nn::ParameterSet&, nn::Gradients* g) {
        return batch_loss(d, drawn, fx.sched, true, g);
      };
      nn::GradCheckOptions opts;
      opts.coordinates = 300;
      const auto r = nn::grad_check(f, d.params(), opts);
      INFO("flags " << flags.no_ctrl_stats << flags.no_grn << " worst " << d.params().name(0));
      CHECK(r.checked == 300);
      CHECK(r.max_rel_error <= 1e-4);
    }
  }

  TEST_CASE("masked loss equals plain MSE when nothing is zero") {
    Fixture fx;
    Denoiser d(tiny_arch(), ring(6), {}, 12);
    Rng rng(6);
    const auto batch = fx.pick({0, 1, 11, 24, 25, 30});  // controls and molecules, no zeros
    for (auto* e : batch) REQUIRE((e->x0.array() != 0.0).all());
    const auto drawn = draw_batch(d, batch, fx.stats, fx.sched, rng);
    const double masked = batch_loss(d, drawn, fx.sched, true, nullptr);
    double mse = 0.0;
    for (const auto& s : drawn) {
      const Vector x_t = diffusion::forward_noise(s.example->x0, s.t, s.eps, fx.sched);
      const Vector pred = d.denoise(x_t, s.t, {s.example->cell_type, s.example->perturbation, s.ctrl});
      mse += (pred - s.example->x0).squaredNorm() / 6.0;
    }
    mse /= double(drawn.size());
    CHECK(std::abs(masked - mse) <= 1e-12);
    CHECK(std::abs(masked - batch_loss(d, drawn, fx.sched, false, nullptr)) <= 1e-12);
  }

  TEST_CASE("masked loss ignores zero entries") {
    Fixture fx;
    Denoiser d(tiny_arch(), ring(6), {}, 13);
    Rng rng(7);
    const auto batch = fx.pick({12});  // knockout cell with gene 1 at zero
    REQUIRE(batch[0]->x0[1] == 0.0);
    const auto drawn = draw_batch(d, batch, fx.stats, fx.sched, rng);
    const auto& s = drawn[0];
    const Vector x_t = diffusion::forward_noise(s.example->x0, s.t, s.eps, fx.sched);
    const Vector pred = d.denoise(x_t, s.t, {s.example->cell_type, s.example->perturbation, s.ctrl});
    double sum = 0.0;
    for (int j = 0; j < 6; ++j)
      if (j != 1) sum += std::pow(pred[j] - s.example->x0[j], 2);
    CHECK(batch_loss(d, drawn, fx.sched, true, nullptr) == doctest::Approx(sum / 5.0).epsilon(1e-13));
  }

  TEST_CASE("all-zero samples are skipped and contribute no gradient") {
    Fixture fx;
    Denoiser d(tiny_arch(), ring(6), {}, 14);
    TrainExample silent{Vector::Zero(6), 0, GeneKnockout{{0}}};
    Rng r1(8), r2(8);
    auto with = fx.pick({0, 13});
    with.insert(with.begin() + 1, &silent);
    const auto without = fx.pick({0, 13});
    auto drawn_with = draw_batch(d, with, fx.stats, fx.sched, r1);
    auto drawn_without = draw_batch(d, without, fx.stats, fx.sched, r2);
    // Align the draws of the real samples.
    drawn_with[2] = drawn_without[1];
    drawn_with[0] = drawn_without[0];
    nn::Gradients g1(d.params()), g2(d.params());
    std::size_t used = 0;
    const double l1 = batch_loss(d, drawn_with, fx.sched, true, &g1, &used);
    const double l2 = batch_loss(d, drawn_without, fx.sched, true, &g2);
    CHECK(used == 2);
    CHECK(l1 == l2);
    for (std::size_t i = 0; i < d.params().size(); ++i) CHECK(g1[i] == g2[i]);

    const std::vector<const TrainExample*> only{&silent, &silent};
    const auto before = d.to_checkpoint().encode();
    auto opt = nn::AdamState::for_params(d.params(), 1e-2);
    Rng r3(9);
    try {
      train_step(d, only, fx.stats, fx.sched, r3, opt);
      FAIL("expected training error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::training);
    }
    CHECK(d.to_checkpoint().encode() == before);
    CHECK(opt.step_count == 0);
  }

  TEST_CASE("training reduces loss; low-noise reconstruction beats high-noise") {
    Fixture fx;
    Denoiser d(tiny_arch(), ring(6), {}, 15);
    TrainOptions opts;
    opts.steps = 400;
    opts.batch = 16;
    opts.lr = 3e-3;
    Rng rng(10);
    const auto curve = train_denoiser(d, fx.scaled, fx.sched, opts, rng);
    REQUIRE(curve.size() == 400);
    double head = 0, tail = 0;
    for (int i = 0; i < 40; ++i) {
      head += curve[i];
      tail += curve[curve.size() - 1 - i];
    }
    CHECK(tail < head);
    CHECK(d.params().all_finite());

    double err_low = 0, err_high = 0;
    Rng nrng(11);
    for (const auto& ex : fx.examples) {
      const Vector eps = standard_normal_vector(nrng, 6);
      const Conditioning c{ex.cell_type, ex.perturbation,
                           data::is_molecule(ex.perturbation) ? std::optional<Vector>(fx.stats.at(ex.cell_type).mu)
                                                              : std::nullopt};
      const Vector mask = (ex.x0.array() != 0.0).cast<double>();
      err_low += (d.denoise(diffusion::forward_noise(ex.x0, 1, eps, fx.sched), 1, c) - ex.x0).cwiseProduct(mask).squaredNorm();
      err_high += (d.denoise(diffusion::forward_noise(ex.x0, 49, eps, fx.sched), 49, c) - ex.x0).cwiseProduct(mask).squaredNorm();
    }
    CHECK(err_low < err_high);
  }

  TEST_CASE("predict: zero mask, x_max linearity, determinism, clamping") {
    Denoiser d(tiny_arch(), ring(6), {}, 16);
    const auto sched = diffusion::make_schedule(50);
    const Vector xc = Vector::LinSpaced(6, 0.1, 0.6);
    PredictOptions opts;
    opts.sampler.num_steps = 10;
    const Vector zeros = Vector::Zero(6);
    CHECK(predict(d, &zeros, xc, 0, GeneKnockout{{2}}, opts, sched, 3.0).isZero());
    const Vector a = predict(d, nullptr, xc, 0, molecule(1.0), opts, sched, 2.0);
    const Vector b = predict(d, nullptr, xc, 0, molecule(1.0), opts, sched, 4.0);
    CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(a == predict(d, nullptr, xc, 0, molecule(1.0), opts, sched, 2.0));
    CHECK(a.minCoeff() >= 0.0);
    CHECK(a.maxCoeff() <= 2.0);
    Vector half = Vector::Ones(6);
    half[3] = 0.0;
    const Vector masked = predict(d, &half, xc, 0, molecule(1.0), opts, sched, 2.0);
    CHECK(masked[3] == 0.0);
    CHECK(masked[0] == a[0]);
    CHECK_THROWS_AS(predict(d, nullptr, xc, 0, Control{}, opts, sched, 0.0), Error);
    opts.random_latent = true;
    CHECK_THROWS_AS(predict(d, nullptr, xc, 0, Control{}, opts, sched, 1.0), Error);
  }

  TEST_CASE("checkpoint round trip preserves outputs") {
    Denoiser d(tiny_arch(), ring(6), {true, true}, 18);
    d.params().value(0)(0, 0) = 0.123456789;
    const auto ck = d.to_checkpoint();
    const auto back = Denoiser::from_checkpoint(nn::Checkpoint::decode(ck.encode()));
    CHECK(back.flags().no_ctrl_stats);
    CHECK(back.flags().no_grn);
    CHECK(back.graph() == d.graph());
    const Vector x = Vector::Constant(6, 0.4);
    const Conditioning c{1, GeneKnockout{{0, 3}}, std::nullopt};
    CHECK(back.denoise(x, 20, c) == d.denoise(x, 20, c));
    CHECK(back.to_checkpoint().encode() == ck.encode());
  }
}
