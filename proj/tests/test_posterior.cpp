#include <doctest.h>

#include <cmath>

#include "ppl/autograd.hpp"
#include "ppl/error.hpp"
#include "ppl/module.hpp"

using namespace ppl;

namespace {

const Guide& only_guide(const PModule& m) {
  REQUIRE(m.posterior().guide_count() == 1);
  return m.posterior().guide(0);
}

}  // namespace

TEST_CASE("Normal posterior starts at exp(log_scale)") {
  manual_seed(1);
  PModule m(PosteriorSpec::normal(-3.0).make());
  m.set("z", Normal(0.0, 1.0));
  const Guide& g = only_guide(m);
  CHECK(g.form == GuideForm::Normal);
  CHECK(std::exp(g.param("log_scale").item()) == doctest::Approx(0.0497871).epsilon(1e-6));
  CHECK(m.rv("z").guide_dist->stddev().item() == doctest::Approx(0.0497871).epsilon(1e-6));
}

TEST_CASE("ScaledNormal scales the prior's spread") {
  manual_seed(2);
  PModule m(PosteriorSpec::scaled_normal(1e-2).make());
  m.set("z", Normal(0.0, 3.0));
  CHECK(std::exp(only_guide(m).param("log_scale").item()) == doctest::Approx(0.03).epsilon(1e-12));
}

TEST_CASE("guide parameter counts") {
  manual_seed(3);
  PModule normal(PosteriorSpec::normal().make());
  normal.set("w", Distribution(Normal(0.0, 1.0)).expand({3, 2}));
  std::size_t scalars = 0;
  for (const auto& p : normal.parameters()) scalars += p.value.numel();
  CHECK(scalars == 12);

  PModule point(PosteriorSpec::point_mass().make());
  point.set("w", Distribution(Normal(0.0, 1.0)).expand({3, 2}));
  scalars = 0;
  for (const auto& p : point.parameters()) scalars += p.value.numel();
  CHECK(scalars == 6);
}

TEST_CASE("Automatic picks the family from the prior") {
  manual_seed(4);
  PModule m;
  reset_tape();
  m.begin_pass();
  m.set("loc", Normal(0.0, 1.0));
  m.set("scale", HalfNormal(1.0));
  m.set("head", Categorical(Tensor::vector({0.0, 1.0}) * 1.0));
  const Posterior& p = m.posterior();
  CHECK(p.guide(0).form == GuideForm::Normal);
  CHECK(p.guide(1).form == GuideForm::LogNormal);
  CHECK(p.guide(2).form == GuideForm::Prior);
  CHECK(p.guide(2).params.empty());
  CHECK(m.get("scale").item() > 0.0);
}

TEST_CASE("dynamic guides follow the current pass") {
  manual_seed(5);
  PModule m;
  std::vector<Tensor> firsts;
  for (int i = 0; i < 2; ++i) {
    reset_tape();
    m.begin_pass();
    const Tensor mu = Tensor::vector({1.0, -2.0}) * static_cast<double>(i + 1);
    m.set("y", Normal(mu, 0.5));
    const auto* g = m.rv("y").guide_dist->get_if<Normal>();
    REQUIRE(g != nullptr);
    CHECK(g->loc.bitwise_equal(mu));
    CHECK(m.parameters().empty());
  }

  // different logits give different class distributions
  auto frequency = [&](const Tensor& logits) {
    double ones = 0;
    for (int k = 0; k < 2000; ++k) {
      reset_tape();
      m.begin_pass();
      m.sample();
      ones += m.set("c", Categorical(logits * 1.0)).item();
    }
    return ones / 2000.0;
  };
  CHECK(frequency(Tensor::vector({2.0, -2.0})) < 0.1);
  CHECK(frequency(Tensor::vector({-2.0, 2.0})) > 0.9);
  CHECK(m.posterior().guide_count() == 2);
}

TEST_CASE("dynamic detection") {
  reset_tape();
  Tensor w = Tensor::matrix({{1.0, 0.5}});
  CHECK(dynamic_detect(Categorical(matmul(w, Tensor::matrix({{1.0}, {2.0}})))));
  CHECK_FALSE(dynamic_detect(Normal(0.0, 3.0)));
  Tensor stored = Tensor(0.2).set_requires_grad(true);
  CHECK_FALSE(dynamic_detect(Normal(stored, 1.0)));
  Tensor computed = stored * 2.0;
  CHECK(dynamic_detect(Normal(computed, 1.0)));
  reset_tape();
  CHECK_FALSE(dynamic_detect(Normal(computed, 1.0)));
}

TEST_CASE("refresh_dynamic rejects static guides") {
  manual_seed(6);
  PModule m(PosteriorSpec::normal().make());
  m.set("z", Normal(0.0, 1.0));
  CHECK_THROWS_AS(m.posterior().refresh_dynamic(0, Normal(0.0, 1.0)), ModelError);
}

TEST_CASE("manual posteriors") {
  manual_seed(7);
  auto post = std::make_unique<ManualPosterior>([](ManualPosterior& p) {
    p.set_guide("z", Normal(p.parameter("loc"), exp(p.parameter("log_scale"))));
  });
  post->add_parameter("loc", Tensor(0.25));
  post->add_parameter("log_scale", Tensor(-1.0));
  PModule m(std::move(post));
  reset_tape();
  m.begin_pass();
  m.set("z", Normal(0.0, 1.0));
  CHECK(m.rv("z").guide_dist->mean().item() == 0.25);
  CHECK(m.parameters().size() == 2);
  try {
    m.set("other", Normal(0.0, 1.0));
    FAIL("expected MissingGuide");
  } catch (const MissingGuide& e) {
    CHECK(std::string(e.what()).find("other") != std::string::npos);
  }
}

TEST_CASE("posterior specs round trip through text") {
  for (const auto& spec : {PosteriorSpec::automatic(), PosteriorSpec::normal(-2.5), PosteriorSpec::scaled_normal(0.05),
                           PosteriorSpec::point_mass()}) {
    const auto back = PosteriorSpec::parse(spec.to_string());
    CHECK(back.to_string() == spec.to_string());
    CHECK(spec.make()->describe() == spec.to_string());
  }
  CHECK_THROWS_AS(PosteriorSpec::parse("Gamma"), ModelError);
}

TEST_CASE("a new guide can start at a given value") {
  manual_seed(8);
  PModule m(PosteriorSpec::normal().make());
  m.set("z", Distribution(Normal(0.0, 1.0)).expand({2}), Tensor::vector({0.3, -0.4}));
  CHECK(only_guide(m).param("loc").to_vector() == std::vector<double>{0.3, -0.4});
  CHECK(m.get("z").to_vector() == std::vector<double>{0.3, -0.4});
}
