#include <algorithm>
#include <cmath>

#include <doctest.h>

#include "mask_model.hpp"
#include "nn/gradcheck.hpp"
#include "support.hpp"

using namespace unlasting;
using namespace unlasting::model;

namespace {

ArchConfig mask_arch(std::size_t n = 6) {
  ArchConfig a;
  a.n_genes = n;
  a.mol_dim = 3;
  a.n_cell_types = 2;
  a.gene_dim = 6;
  a.hidden = 8;
  a.cell_dim = 4;
  return a;
}

grn::Grn chain(std::size_t n) {
  Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) a(i, i + 1) = a(i + 1, i) = 1;
  return grn::Grn(a);
}

// Zero readout weights and a fixed bias: every probability is sigmoid(bias).
void pin_readout(MaskModel& m, const Vector& bias) {
  auto& ps = m.params();
  ps.value(ps.find("gene.readout_w")).setZero();
  ps.value(ps.find("gene.readout_b")) = bias;
}

const data::PerturbationCondition knockout{data::GeneKnockout{{1}}};

}  // namespace

TEST_SUITE("mask_model") {
  TEST_CASE("probabilities lie strictly inside the unit interval and are deterministic") {
    MaskModel m(mask_arch(), chain(6), 1);
    Rng rng(1);
    for (int rep = 0; rep < 20; ++rep) {
      const Vector ctrl = 5.0 * standard_normal_vector(rng, 6);
      const Vector p = m.mask_forward(rep % 2, ctrl, knockout);
      CHECK(p.size() == 6);
      CHECK((p.array() > 0.0).all());
      CHECK((p.array() < 1.0).all());
      CHECK(p == m.mask_forward(rep % 2, ctrl, knockout));
    }
    CHECK_THROWS_AS(m.mask_forward(0, Vector::Zero(5), knockout), Error);
    CHECK_THROWS_AS(m.mask_forward(2, Vector::Zero(6), knockout), Error);
  }

  TEST_CASE("zero readout gives one half and a uniform BCE of ln 2") {
    MaskModel m(mask_arch(), chain(6), 2);
    pin_readout(m, Vector::Zero(6));
    Rng rng(2);
    const Vector p = m.mask_forward(0, standard_normal_vector(rng, 6), data::Control{});
    for (Eigen::Index j = 0; j < 6; ++j) CHECK(p[j] == 0.5);

    TrainExample ex{Vector::LinSpaced(6, 0.0, 1.0), 0, data::Control{}};
    const std::vector<MaskSample> batch{{&ex, Vector::Zero(6)}};
    CHECK(mask_batch_loss(m, batch, nullptr) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }

  TEST_CASE("saturated correct readout gives near-zero loss; large readout saturates to one") {
    MaskModel m(mask_arch(), chain(6), 3);
    TrainExample ex{Vector::Zero(6), 1, data::Control{}};
    ex.x0 << 0.0, 0.3, 0.0, 0.9, 0.1, 0.2;
    Vector bias(6);
    for (Eigen::Index j = 0; j < 6; ++j) bias[j] = ex.x0[j] != 0.0 ? 40.0 : -40.0;
    pin_readout(m, bias);
    const std::vector<MaskSample> batch{{&ex, Vector::Ones(6)}};
    CHECK(mask_batch_loss(m, batch, nullptr) <= 1e-6);
    const Vector p = m.mask_forward(1, Vector::Ones(6), data::Control{});
    CHECK(p[3] == 1.0 - kProbClamp);
    CHECK(p[0] == kProbClamp);
  }

  TEST_CASE("BCE gradient matches finite differences") {
    Rng rng(17);
    const auto ds = testing::toy_dataset(rng);
    const auto scaled = data::scale_unit(ds, ds.values.maxCoeff());
    const auto examples = training_examples(scaled);
    const auto stats = data::control_stats_by_type(scaled);
    MaskModel m(mask_arch(), chain(6), 4);
    std::vector<const TrainExample*> picked{&examples[0], &examples[14], &examples[27], &examples[33]};
    Rng draw(5);
    const auto batch = draw_mask_batch(picked, stats, draw);
    nn::LossFn f = [&](const nn::ParameterSet&, nn::Gradients* g) { return mask_batch_loss(m, batch, g); };
    nn::GradCheckOptions opts;
    opts.coordinates = 250;
    const auto r = nn::grad_check(f, m.params(), opts);
    CHECK(r.checked == 250);
    CHECK(r.max_rel_error <= 1e-4);
  }

  TEST_CASE("voting: single sample, threshold boundary, majority") {
    MaskModel m(mask_arch(), chain(6), 6);
    Rng rng(7);
    std::vector<Vector> samples;
    for (int k = 0; k < 3; ++k) samples.push_back(3.0 * standard_normal_vector(rng, 6));

    const Vector p0 = m.mask_forward(0, samples[0], knockout);
    const auto one = mask_predict(m, std::span(samples).first(1), 0, knockout, 0.5);
    for (Eigen::Index j = 0; j < 6; ++j) {
      CHECK(one.binary[j] == (p0[j] >= 0.5 ? 1.0 : 0.0));
      CHECK(one.agg_count[j] == static_cast<int>(one.binary[j]));
    }
    const auto at = mask_predict(m, std::span(samples).first(1), 0, knockout, p0[2]);
    CHECK(at.binary[2] == 1.0);

    std::vector<double> probs;
    for (const auto& s : samples) probs.push_back(m.mask_forward(0, s, knockout)[4]);
    std::sort(probs.begin(), probs.end());
    REQUIRE(probs[0] < probs[1]);
    REQUIRE(probs[1] < probs[2]);
    const auto two_of_three = mask_predict(m, samples, 0, knockout, 0.5 * (probs[0] + probs[1]));
    CHECK(two_of_three.agg_count[4] == 2);
    CHECK(two_of_three.binary[4] == 1.0);
    const auto one_of_three = mask_predict(m, samples, 0, knockout, 0.5 * (probs[1] + probs[2]));
    CHECK(one_of_three.agg_count[4] == 1);
    CHECK(one_of_three.binary[4] == 0.0);

    CHECK_THROWS_AS(mask_predict(m, std::span<const Vector>{}, 0, knockout), Error);
    CHECK_THROWS_AS(mask_predict(m, samples, 0, knockout, 0.0), Error);
    CHECK_THROWS_AS(mask_predict(m, samples, 0, knockout, 1.0), Error);
  }

  TEST_CASE("raising the threshold never adds active votes") {
    MaskModel m(mask_arch(), chain(6), 8);
    Rng rng(9);
    std::vector<Vector> samples;
    for (int k = 0; k < 16; ++k) samples.push_back(3.0 * standard_normal_vector(rng, 6));
    Eigen::VectorXi prev = Eigen::VectorXi::Constant(6, 17);
    for (double tau = 0.05; tau < 1.0; tau += 0.05) {
      const auto r = mask_predict(m, samples, 1, knockout, tau);
      CHECK((r.agg_count.array() <= prev.array()).all());
      CHECK((r.agg_count.array() >= 0).all());
      prev = r.agg_count;
    }
  }

  TEST_CASE("checkpoint round trip preserves predictions") {
    MaskModel m(mask_arch(), chain(6), 10);
    const auto back = MaskModel::from_checkpoint(nn::Checkpoint::decode(m.to_checkpoint().encode()));
    Rng rng(11);
    const Vector ctrl = standard_normal_vector(rng, 6);
    CHECK(back.mask_forward(1, ctrl, knockout) == m.mask_forward(1, ctrl, knockout));
    CHECK(back.graph().adjacency() == m.graph().adjacency());
  }

  TEST_CASE("training learns a deterministic silent set") {
    Rng rng(17);
    const auto ds = testing::toy_dataset(rng, 6, 20);
    const auto scaled = data::scale_unit(ds, ds.values.maxCoeff());
    MaskModel m(mask_arch(), chain(6), 12);
    TrainOptions opts;
    opts.steps = 300;
    opts.batch = 8;
    opts.lr = 3e-3;
    Rng train_rng(13);
    const auto curve = train_mask_model(m, scaled, opts, train_rng);
    REQUIRE(curve.size() == 300);
    CHECK(curve.back() < curve.front());

    std::vector<Vector> samples;
    for (std::size_t i = 0; i < scaled.n_cells() && samples.size() < 16; ++i)
      if (scaled.condition_id[i] == "ctrl" && scaled.cell_type[i] == 0) samples.push_back(scaled.values.row(i));
    const auto ko = mask_predict(m, samples, 0, knockout);
    const auto ctrl = mask_predict(m, samples, 0, data::Control{});
    CHECK(ko.binary[1] == 0.0);
    CHECK(ctrl.binary[1] == 1.0);
    CHECK(ko.binary.sum() == 5.0);
    CHECK(ctrl.binary.sum() == 6.0);
  }
}
