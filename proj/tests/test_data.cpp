#include "fedcomp/fedcomp.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

using namespace fedcomp;

namespace {

LabeledDataset pool(std::size_t pos, std::size_t neg) {
  LabeledDataset ds;
  ds.name = "pool";
  ds.features.resize(static_cast<Eigen::Index>(pos + neg), 2);
  for (std::size_t i = 0; i < pos + neg; ++i) {
    ds.features(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i);
    ds.features(static_cast<Eigen::Index>(i), 1) = -static_cast<double>(i);
    ds.labels.push_back(i < pos ? 1 : -1);
  }
  return ds;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("fedcomp_" + name);
  std::ofstream(path) << body;
  return path.string();
}

// Row identity through the first feature column of `pool`.
std::vector<double> keys(const LabeledDataset& ds) {
  std::vector<double> k(ds.features.col(0).begin(), ds.features.col(0).end());
  std::sort(k.begin(), k.end());
  return k;
}

}  // namespace

TEST(GaussianMixture, BalancedLabels) {
  const auto ds = gen_gaussian_mixture(1000, 5, 2.0, 3);
  EXPECT_EQ(ds.positives(), 500u);
  EXPECT_EQ(ds.negatives(), 500u);
  EXPECT_EQ(ds.feature_dim(), 5u);
  ds.validate();
}

TEST(GaussianMixture, ClassMeansMatchSeparation) {
  const auto ds = gen_gaussian_mixture(40000, 4, 2.0, 9);
  Eigen::RowVectorXd pos = Eigen::RowVectorXd::Zero(4), neg = Eigen::RowVectorXd::Zero(4);
  for (std::size_t i = 0; i < ds.size(); ++i)
    (ds.labels[i] == 1 ? pos : neg) += ds.features.row(static_cast<Eigen::Index>(i));
  pos /= 20000.0;
  neg /= 20000.0;
  for (int j = 0; j < 4; ++j) {
    EXPECT_NEAR(pos[j], 1.0, 0.03);
    EXPECT_NEAR(neg[j], -1.0, 0.03);
  }
}

TEST(GaussianMixture, RejectsTooFewSamples) { EXPECT_THROW(gen_gaussian_mixture(1, 2, 1.0, 0), DataError); }

TEST(GaussianMixture, Deterministic) {
  const auto a = gen_gaussian_mixture(100, 3, 1.0, 5);
  const auto b = gen_gaussian_mixture(100, 3, 1.0, 5);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);
}

TEST(ImbalanceSubsample, TableCountsReproduce) {
  const auto ds = pool(5000, 25000);
  const auto out = imbalance_subsample(ds, 0.1, 1);
  EXPECT_EQ(out.positives(), 2777u);
  EXPECT_EQ(out.negatives(), 25000u);
  EXPECT_EQ(out.positives(), oracle::max_positive_count(25000, 1, 10));
}

TEST(ImbalanceSubsample, OnePercent) {
  const auto out = imbalance_subsample(pool(5000, 25000), 0.01, 1);
  EXPECT_EQ(out.positives(), 252u);
  EXPECT_EQ(out.positives(), oracle::max_positive_count(25000, 1, 100));
}

TEST(ImbalanceSubsample, IntegerSearchMatchesOracleOnGrid) {
  for (std::uint64_t neg : {1u, 7u, 99u, 1000u, 25000u})
    for (std::uint64_t pct = 1; pct < 100; pct += 7)
      EXPECT_EQ(max_positives_for_ratio(neg, static_cast<double>(pct) / 100.0),
                oracle::max_positive_count(neg, pct, 100))
          << "neg=" << neg << " pct=" << pct;
}

TEST(ImbalanceSubsample, RatioEqualToCurrentFractionIsIdentity) {
  const auto ds = pool(10, 90);
  const auto out = imbalance_subsample(ds, 0.1, 4);
  EXPECT_EQ(out.features, ds.features);
  EXPECT_EQ(out.labels, ds.labels);
}

TEST(ImbalanceSubsample, NegativesAndFeaturesUntouched) {
  const auto ds = pool(300, 700);
  const auto out = imbalance_subsample(ds, 0.2, 8);
  std::size_t negs_seen = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto row = static_cast<std::size_t>(out.features(static_cast<Eigen::Index>(i), 0));
    EXPECT_EQ(out.labels[i], ds.labels[row]);
    EXPECT_EQ(out.features.row(static_cast<Eigen::Index>(i)), ds.features.row(static_cast<Eigen::Index>(row)));
    negs_seen += out.labels[i] == -1;
  }
  EXPECT_EQ(negs_seen, 700u);
  EXPECT_EQ(out.positives(), oracle::max_positive_count(700, 2, 10));
}

TEST(ImbalanceSubsample, DeterministicAndSeedDependent) {
  const auto ds = pool(300, 700);
  EXPECT_EQ(keys(imbalance_subsample(ds, 0.2, 8)), keys(imbalance_subsample(ds, 0.2, 8)));
  EXPECT_NE(keys(imbalance_subsample(ds, 0.2, 8)), keys(imbalance_subsample(ds, 0.2, 9)));
}

TEST(ImbalanceSubsample, Errors) {
  EXPECT_THROW(imbalance_subsample(pool(10, 90), 0.2, 0), DataError);
  EXPECT_THROW(imbalance_subsample(pool(10, 90), 0.0, 0), DataError);
  EXPECT_THROW(imbalance_subsample(pool(10, 90), 1.0, 0), DataError);
  EXPECT_THROW(imbalance_subsample(pool(0, 90), 0.1, 0), DataError);
}

TEST(TrainTestSplit, Stratified) {
  const auto [train, test] = train_test_split(pool(50, 50), 0.2, 2);
  EXPECT_EQ(test.positives(), 10u);
  EXPECT_EQ(test.negatives(), 10u);
  EXPECT_EQ(train.positives(), 40u);
  EXPECT_EQ(train.negatives(), 40u);
}

TEST(TrainTestSplit, UnionAndDisjoint) {
  const auto ds = pool(37, 63);
  const auto [train, test] = train_test_split(ds, 0.3, 5);
  std::vector<double> all = keys(train);
  const auto t = keys(test);
  all.insert(all.end(), t.begin(), t.end());
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, keys(ds));
  EXPECT_TRUE(std::adjacent_find(all.begin(), all.end()) == all.end());
}

TEST(TrainTestSplit, Deterministic) {
  const auto ds = pool(37, 63);
  EXPECT_EQ(keys(train_test_split(ds, 0.3, 5).second), keys(train_test_split(ds, 0.3, 5).second));
}

TEST(TrainTestSplit, RejectsBadFraction) {
  EXPECT_THROW(train_test_split(pool(5, 5), 0.0, 1), DataError);
  EXPECT_THROW(train_test_split(pool(5, 5), 1.0, 1), DataError);
}

TEST(Pipeline, TrainImbalancedTestBalanced) {
  ExperimentConfig cfg;
  cfg.n_samples = 4000;
  const auto [train, test] = load_datasets(cfg);
  EXPECT_EQ(test.positives(), test.negatives());
  const double frac = static_cast<double>(train.positives()) / static_cast<double>(train.size());
  EXPECT_LE(frac, 0.1);
  EXPECT_EQ(train.positives(), oracle::max_positive_count(train.negatives(), 1, 10));
}

TEST(LoadCsv, Basic) {
  const auto ds = load_csv(write_temp("basic.csv", "1,0.5,0.2\n-1,0.1,0.9\n"));
  EXPECT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.feature_dim(), 2u);
  EXPECT_EQ(ds.labels, (std::vector<int>{1, -1}));
  EXPECT_DOUBLE_EQ(ds.features(1, 1), 0.9);
}

TEST(LoadCsv, ZeroLabelMapsToNegative) {
  const auto ds = load_csv(write_temp("zero.csv", "0,1.0\n"));
  EXPECT_EQ(ds.labels.front(), -1);
}

TEST(LoadCsv, RaggedRowNamesLine) {
  const auto path = write_temp("ragged.csv", "1,0.5,0.2\n-1,0.1\n");
  try {
    load_csv(path);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, HeaderSkipping) {
  const auto path = write_temp("header.csv", "label,a\n1,2\n0,3\n");
  EXPECT_THROW(load_csv(path), DataError);
  EXPECT_EQ(load_csv(path, true).size(), 2u);
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(load_csv("/nonexistent/nowhere.csv"), DataError);
  EXPECT_THROW(load_csv(write_temp("badlabel.csv", "2,1.0\n")), DataError);
  EXPECT_THROW(load_csv(write_temp("badnum.csv", "1,abc\n")), DataError);
  EXPECT_THROW(load_csv(write_temp("empty.csv", "")), DataError);
}

TEST(Minibatch, CountsAndValidation) {
  RowMatrix f(3, 1);
  f << 1, 2, 3;
  const Minibatch b(f, {1, -1, -1});
  EXPECT_EQ(b.positive_count, 1u);
  EXPECT_EQ(b.negative_count, 2u);
  EXPECT_EQ(b.positive_count + b.negative_count, b.size());
  EXPECT_THROW(Minibatch(f, {1, 0, -1}), DataError);
  EXPECT_THROW(Minibatch(f, {1, -1}), DataError);
}
