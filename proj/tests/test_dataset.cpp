#include "oracles.hpp"
#include "temp_dir.hpp"

#include <gtest/gtest.h>

using namespace vdt;
using vdt::testing::TempDir;

TEST(LoadDataset, CsvEchoesInput) {
  TempDir dir;
  const Dataset ds = load_dataset(dir.write("d.csv", "0\n2\n"), Format::csv);
  ASSERT_EQ(ds.n(), 2u);
  ASSERT_EQ(ds.dim(), 1u);
  EXPECT_EQ(ds.points(0, 0), 0.0);
  EXPECT_EQ(ds.points(1, 0), 2.0);
  EXPECT_FALSE(ds.has_labels());
}

TEST(LoadDataset, CsvHeaderIsSkipped) {
  TempDir dir;
  const Dataset ds = load_dataset(dir.write("d.csv", "x,y\n1,2\n3,4\n"), Format::csv);
  ASSERT_EQ(ds.n(), 2u);
  EXPECT_EQ(ds.points(1, 1), 4.0);
}

TEST(LoadDataset, CsvNonNumericFieldNamesLine) {
  TempDir dir;
  const auto path = dir.write("d.csv", "1,2\nabc,3\n");
  try {
    load_dataset(path, Format::csv);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(LoadDataset, CsvRejectsRaggedRowsAndNonFinite) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.write("a.csv", "1,2\n3\n"), Format::csv), ParseError);
  EXPECT_THROW(load_dataset(dir.write("b.csv", "1,2\n3,inf\n"), Format::csv), ParseError);
  EXPECT_THROW(load_dataset(dir.write("c.csv", "1,nan\n3,4\n"), Format::csv), ParseError);
}

TEST(LoadDataset, NeedsTwoPoints) {
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.write("d.csv", "1\n"), Format::csv), Error);
}

TEST(LoadDataset, MissingFile) {
  EXPECT_THROW(load_dataset("/nonexistent/file.csv", Format::csv), Error);
}

TEST(LoadDataset, LibsvmInfersDimensionFromMaxIndex) {
  TempDir dir;
  const Dataset ds = load_dataset(dir.write("d.svm", "1 1:0.5 3:2.0\n0 2:1\n"), Format::libsvm);
  ASSERT_EQ(ds.n(), 2u);
  ASSERT_EQ(ds.dim(), 3u);
  EXPECT_EQ(ds.points(0, 0), 0.5);
  EXPECT_EQ(ds.points(0, 1), 0.0);
  EXPECT_EQ(ds.points(0, 2), 2.0);
  EXPECT_EQ(ds.labels[0], 1);
  EXPECT_EQ(ds.labels[1], 0);
  EXPECT_EQ(ds.classes, 2);
}

TEST(LoadDataset, LibsvmRemapsSignedLabels) {
  TempDir dir;
  const Dataset ds = load_dataset(dir.write("d.svm", "-1 1:1\n+1 1:2\n-1 1:3\n"), Format::libsvm);
  EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0}));
}

TEST(LoadDataset, LibsvmBadTokenNamesLine) {
  TempDir dir;
  try {
    load_dataset(dir.write("d.svm", "1 1:1\n0 2:x\n"), Format::libsvm);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(LoadDataset, RoundTripsAllFormats) {
  TempDir dir;
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 40, 3, 11);

  save_dataset(ds, dir.file("d.csv"), Format::csv);
  const Dataset csv = load_dataset(dir.file("d.csv"), Format::csv);
  EXPECT_EQ(csv.points, ds.points);  // 17 significant digits read back exactly

  save_dataset(ds, dir.file("d.svm"), Format::libsvm);
  const Dataset svm = load_dataset(dir.file("d.svm"), Format::libsvm);
  EXPECT_EQ(svm.points, ds.points);
  EXPECT_EQ(svm.labels, ds.labels);

  save_dataset(ds, dir.file("d.f32"), Format::f32raw);
  const Dataset raw = load_dataset(dir.file("d.f32"), Format::f32raw);
  EXPECT_EQ(raw.points, ds.points.cast<float>().cast<double>());
  save_dataset(raw, dir.file("e.f32"), Format::f32raw);
  EXPECT_EQ(load_dataset(dir.file("e.f32"), Format::f32raw).points, raw.points);
}

TEST(LoadDataset, F32RawSizeMismatch) {
  TempDir dir;
  dir.write("d.f32", std::string(12, '\0'));
  dir.write("d.f32.meta", R"({"n": 2, "d": 2})");
  EXPECT_THROW(load_dataset(dir.file("d.f32"), Format::f32raw), ParseError);
}

TEST(LoadDataset, DuplicatePointsAreAllowed) {
  TempDir dir;
  const Dataset ds = load_dataset(dir.write("d.csv", "1,1\n1,1\n2,2\n"), Format::csv);
  EXPECT_EQ(ds.n(), 3u);
}

TEST(Labels, LoadAttachAndValidate) {
  TempDir dir;
  Dataset ds = make_synthetic(SyntheticKind::uniform_cube, 5, 2, 1);
  const auto labels = load_labels(dir.write("l.csv", "index,label\n0,1\n3,0\n"), ds.n());
  EXPECT_EQ(labels, (std::vector<int>{1, kUnlabeled, kUnlabeled, 0, kUnlabeled}));
  attach_labels(ds, labels);
  EXPECT_EQ(ds.classes, 2);
  EXPECT_NO_THROW(ds.validate());
  EXPECT_THROW(load_labels(dir.write("bad.csv", "7,1\n"), ds.n()), ParseError);
  EXPECT_THROW(load_labels(dir.write("neg.csv", "1,-2\n"), ds.n()), ParseError);
}

TEST(Labels, SaveLoadRoundTrip) {
  TempDir dir;
  const std::vector<int> labels{0, kUnlabeled, 2, 1};
  save_labels(labels, dir.file("l.csv"));
  EXPECT_EQ(load_labels(dir.file("l.csv"), 4), labels);
}

TEST(MakeSplit, RoundsFractionOfN) {
  Dataset ten = make_synthetic(SyntheticKind::two_gaussians, 10, 1, 1);
  EXPECT_EQ(make_split(ten, 0.1, 7).labeled_indices.size(), 1u);
  Dataset big = make_synthetic(SyntheticKind::two_gaussians, 1500, 2, 1);
  EXPECT_EQ(make_split(big, 0.1, 7).labeled_indices.size(), 150u);
}

TEST(MakeSplit, DeterministicUniqueSorted) {
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 300, 2, 4);
  const auto a = make_split(ds, 0.2, 9);
  const auto b = make_split(ds, 0.2, 9);
  EXPECT_EQ(a.labeled_indices, b.labeled_indices);
  EXPECT_TRUE(std::is_sorted(a.labeled_indices.begin(), a.labeled_indices.end()));
  EXPECT_EQ(std::adjacent_find(a.labeled_indices.begin(), a.labeled_indices.end()), a.labeled_indices.end());
  EXPECT_NE(make_split(ds, 0.2, 10).labeled_indices, a.labeled_indices);
}

TEST(MakeSplit, Errors) {
  const Dataset unlabeled = make_synthetic(SyntheticKind::uniform_cube, 10, 1, 1);
  EXPECT_THROW(make_split(unlabeled, 0.1, 1), Error);
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 10, 1, 1);
  EXPECT_THROW(make_split(ds, 0.0, 1), Error);
  EXPECT_THROW(make_split(ds, 1.0, 1), Error);
}

TEST(MakeSynthetic, ClassBalance) {
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 4, 1, 3);
  EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 0), 2);
  EXPECT_EQ(std::count(ds.labels.begin(), ds.labels.end(), 1), 2);
}

TEST(MakeSynthetic, UniformCubeRange) {
  const Dataset ds = make_synthetic(SyntheticKind::uniform_cube, 100, 3, 5);
  EXPECT_FALSE(ds.has_labels());
  EXPECT_GE(ds.points.minCoeff(), 0.0);
  EXPECT_LE(ds.points.maxCoeff(), 1.0);
}

TEST(MakeSynthetic, ClassMeansSeparatedByFour) {
  const Dataset ds = make_synthetic(SyntheticKind::two_gaussians, 2000, 2, 8);
  double m0 = 0, m1 = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) (ds.labels[i] == 0 ? m0 : m1) += ds.points(Eigen::Index(i), 0) / 1000.0;
  EXPECT_NEAR(m1 - m0, 4.0, 0.2);
}

TEST(MakeSynthetic, DeterministicPerSeed) {
  EXPECT_EQ(make_synthetic(SyntheticKind::two_gaussians, 50, 2, 3).points,
            make_synthetic(SyntheticKind::two_gaussians, 50, 2, 3).points);
  EXPECT_THROW(make_synthetic(SyntheticKind::two_gaussians, 1, 2, 3), Error);
}
