#include "noisymoe/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace noisymoe;
using namespace testutil;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::invalid_argument;
}

NoisyMoeModel small_noisy(Rng& rng) {
  NoisyMoeModel m;
  m.gmm = random_gmm(2, 2, rng);
  for (int k = 0; k < 2; ++k)
    m.experts.push_back(ExpertModel{normal_vector(1, rng)(0), normal_vector(2, rng), ErrorFamily::gaussian, 0.37});
  m.transition.pi = random_stochastic(2, rng);
  m.alpha_used = 0.75;
  m.diagnostics.labeled_counts = {10, 12};
  m.diagnostics.retained_counts = {6, 7};
  m.diagnostics.status = {ClusterStatus::fitted, ClusterStatus::fitted};
  m.diagnostics.lts_objective = {0.1, 0.2};
  m.diagnostics.eg_trace = {3.0, 2.0};
  return m;
}

}  // namespace

TEST(Csv, RoundTripAtFullPrecision) {
  Rng rng(1);
  Matrix v = normal_matrix(7, 3, rng, 1e3);
  v(0, 0) = 1.0 / 3.0;
  v(1, 1) = -1e-300;
  v(2, 2) = 0.1;
  std::stringstream ss;
  write_csv(ss, {"a", "b", "c"}, v);
  CsvTable t = read_csv(ss);
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(t.values, v);
  EXPECT_EQ(t.column("c"), 2);
  EXPECT_EQ(t.column("zz"), -1);
}

TEST(Csv, BomBlankLinesAndQuotedHeader) {
  std::stringstream ss("\xEF\xBB\xBF\"x1\", y\n\n1.5, -2\n+3,4e1\n\n");
  CsvTable t = read_csv(ss);
  EXPECT_EQ(t.header, (std::vector<std::string>{"x1", "y"}));
  ASSERT_EQ(t.values.rows(), 2);
  EXPECT_EQ(t.values(1, 0), 3.0);
  EXPECT_EQ(t.values(1, 1), 40.0);
}

TEST(Csv, ParseErrorNamesRowAndColumn) {
  std::stringstream ss("x,y\n1,2\n3,abc\n");
  try {
    read_csv(ss, "data.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::parse_error);
    std::string w = e.what();
    EXPECT_NE(w.find("row 3"), std::string::npos) << w;
    EXPECT_NE(w.find("column 2"), std::string::npos) << w;
  }
  std::stringstream ragged("x,y\n1\n");
  EXPECT_EQ(code_of([&] { read_csv(ragged); }), ErrorCode::parse_error);
  std::stringstream nan("x\nnan\n");
  EXPECT_EQ(code_of([&] { read_csv(nan); }), ErrorCode::parse_error);
  std::stringstream empty("");
  EXPECT_EQ(code_of([&] { read_csv(empty); }), ErrorCode::parse_error);
}

TEST(ModelJson, NoisyRoundTrip) {
  Rng rng(2);
  ModelDocument doc{Method::noisyss, {"x1", "x2"}, "y", small_noisy(rng)};
  ModelDocument back = model_from_json(json::parse(to_json(doc).dump()));
  EXPECT_EQ(back.method, Method::noisyss);
  EXPECT_EQ(back.covariates, doc.covariates);
  const auto& a = std::get<NoisyMoeModel>(doc.model);
  const auto& b = std::get<NoisyMoeModel>(back.model);
  EXPECT_EQ(a.transition.pi, b.transition.pi);
  EXPECT_EQ(a.gmm.covariances[1], b.gmm.covariances[1]);
  EXPECT_EQ(a.experts[0].beta, b.experts[0].beta);
  EXPECT_EQ(b.alpha_used, 0.75);
  EXPECT_EQ(b.diagnostics.retained_counts, a.diagnostics.retained_counts);
  Matrix x = normal_matrix(50, 2, rng, 3.0);
  EXPECT_LT((predict(doc, x) - predict(back, x)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ModelJson, MoessAndMoeRoundTrip) {
  Rng rng(3);
  MoessModel s;
  s.gmm = random_gmm(3, 1, rng);
  for (int k = 0; k < 3; ++k) s.experts.push_back(ExpertModel{double(k), normal_vector(1, rng), ErrorFamily::gaussian, 1.0});
  s.labeled_counts = {1, 2, 3};
  s.status.assign(3, ClusterStatus::thin);
  ModelDocument ds{Method::moess, {"x"}, "y", s};
  ModelDocument bs = model_from_json(to_json(ds));
  Matrix x = normal_matrix(20, 1, rng, 3.0);
  EXPECT_EQ(predict(ds, x), predict(bs, x));

  MoeModel e;
  e.gate_kind = GateKind::quadratic;
  e.gate_params = normal_matrix(2, 3, rng);
  for (int k = 0; k < 2; ++k) e.experts.push_back(ExpertModel{double(k), normal_vector(1, rng), ErrorFamily::gaussian, 0.5});
  e.log_likelihood = -12.5;
  ModelDocument de{Method::moequad, {"x"}, "y", e};
  ModelDocument be = model_from_json(to_json(de));
  EXPECT_EQ(std::get<MoeModel>(be.model).gate_kind, GateKind::quadratic);
  EXPECT_EQ(predict(de, x), predict(be, x));
}

TEST(ModelJson, VersionAndSchemaChecks) {
  Rng rng(4);
  json j = to_json(ModelDocument{Method::noisyss, {"x1", "x2"}, "y", small_noisy(rng)});
  json newer = j;
  newer["version"] = kModelVersion + 1;
  EXPECT_EQ(code_of([&] { model_from_json(newer); }), ErrorCode::model_version_mismatch);
  json wrong = j;
  wrong["schema"] = "something.else";
  EXPECT_EQ(code_of([&] { model_from_json(wrong); }), ErrorCode::schema_mismatch);
  json bad_k = j;
  bad_k["model"]["transition"] = json::array({json::array({1.0})});
  EXPECT_EQ(code_of([&] { model_from_json(bad_k); }), ErrorCode::schema_mismatch);
}

TEST(ModelJson, FileRoundTripAndErrors) {
  Rng rng(5);
  auto dir = std::filesystem::temp_directory_path() / "noisymoe_io_test";
  std::filesystem::create_directories(dir);
  std::string path = (dir / "m.json").string();
  ModelDocument doc{Method::noisyss, {"x1", "x2"}, "y", small_noisy(rng)};
  save_model(path, doc);
  ModelDocument back = load_model(path);
  Matrix x = normal_matrix(10, 2, rng);
  EXPECT_EQ(predict(doc, x), predict(back, x));
  {
    std::ofstream(dir / "bad.json") << "{ not json";
  }
  EXPECT_EQ(code_of([&] { load_model((dir / "bad.json").string()); }), ErrorCode::parse_error);
  {
    std::ofstream(dir / "partial.json") << R"({"schema":"noisymoe.model","version":1,"method":"moess"})";
  }
  EXPECT_EQ(code_of([&] { load_model((dir / "partial.json").string()); }), ErrorCode::schema_mismatch);
  EXPECT_EQ(code_of([&] { load_model((dir / "missing.json").string()); }), ErrorCode::parse_error);
  std::filesystem::remove_all(dir);
}
