// Copyright 2026 The pce-cal Authors
// SPDX-License-Identifier: Apache-2.0

#include "pcecal/dataset_io.hpp"

#include <cstring>
#include <fstream>

#include "doctest.h"
#include "pcecal/error.hpp"
#include "test_support.hpp"

using namespace pcecal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("pcecal_io_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Hand-rolled NPY v1.0 writer for test fixtures.
std::string npy_fixture(const std::string& dict, const std::string& payload) {
  std::string header = dict;
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::string out = "\x93NUMPY";
  out += '\x01';
  out += '\x00';
  out += static_cast<char>(header.size() & 0xff);
  out += static_cast<char>(header.size() >> 8);
  return out + header + payload;
}

template <typename T>
std::string payload_of(std::initializer_list<T> values) {
  std::string out;
  for (T v : values) out.append(reinterpret_cast<const char*>(&v), sizeof v);
  return out;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kIo;
}

}  // namespace

TEST_CASE("load_npy reads a 2x3 float64 zero matrix") {
  TempDir dir;
  write_bytes(dir / "z.npy",
              npy_fixture("{'descr': '<f8', 'fortran_order': False, 'shape': (2, 3), }",
                          std::string(48, '\0')));
  const Matrix m = load_npy(dir / "z.npy");
  CHECK(m.rows() == 2);
  CHECK(m.cols() == 3);
  for (double v : m.data()) CHECK(v == 0.0);
}

TEST_CASE("int64 labels written by an independent writer load as labels") {
  TempDir dir;
  write_bytes(dir / "y.npy",
              npy_fixture("{'descr': '<i8', 'fortran_order': False, 'shape': (4,), }",
                          payload_of<std::int64_t>({0, 1, 2, 1})));
  CHECK(load_labels(dir / "y.npy") == LabelVector{0, 1, 2, 1});
  // Through the matrix path a rank-1 array becomes one column.
  const Matrix m = load_npy(dir / "y.npy");
  CHECK(m.rows() == 4);
  CHECK(m.cols() == 1);
  CHECK(m(2, 0) == 2.0);
}

TEST_CASE("float32 payloads are widened") {
  const auto bytes = npy_fixture("{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }",
                                 payload_of<float>({0.5f, -1.25f}));
  const Matrix m = decode_npy(bytes);
  CHECK(m == Matrix{{0.5, -1.25}});
}

TEST_CASE("float labels with whole values are accepted, fractional ones rejected") {
  const auto whole = npy_fixture("{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }",
                                 payload_of<double>({2.0, 0.0, 1.0}));
  CHECK(decode_npy_labels(whole) == LabelVector{2, 0, 1});
  const auto frac = npy_fixture("{'descr': '<f8', 'fortran_order': False, 'shape': (2,), }",
                                payload_of<double>({1.0, 0.5}));
  CHECK(kind_of([&] { decode_npy_labels(frac); }) == ErrorKind::kParse);
}

TEST_CASE("save_npy writes the exact NPY v1.0 layout") {
  TempDir dir;
  save_npy(Matrix(1, 1, 0.0), dir / "one.npy");
  CHECK(fs::file_size(dir / "one.npy") == 136);
  // Bytes numpy.save produces for np.zeros((1, 1)).
  const std::string dict = "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), }";
  std::string expected = std::string("\x93NUMPY\x01\x00", 8) + "v" + std::string(1, '\0') + dict +
                         std::string(118 - dict.size() - 1, ' ') + "\n" + std::string(8, '\0');
  CHECK(encode_npy(Matrix(1, 1, 0.0)) == expected);

  save_npy(Matrix(0, 3), dir / "empty.npy");
  const Matrix back = load_npy(dir / "empty.npy");
  CHECK(back.rows() == 0);
  CHECK(back.cols() == 3);
  CHECK(fs::file_size(dir / "empty.npy") % 64 == 0);
}

TEST_CASE("save_npy then load_npy is the bitwise identity") {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = trial % 4 == 0 ? 0 : 1 + trial * 7 % 31;
    const std::size_t cols = 1 + trial % 6;
    Matrix m(rows, cols);
    for (double& v : m.data()) {
      // Arbitrary finite bit patterns, including subnormals.
      std::uint64_t b;
      double d;
      do {
        b = bits(rng);
        std::memcpy(&d, &b, sizeof d);
      } while (!std::isfinite(d));
      v = d;
    }
    save_npy(m, dir / "m.npy");
    const Matrix back = load_npy(dir / "m.npy");
    REQUIRE(back.rows() == rows);
    REQUIRE(back.cols() == cols);
    CHECK(std::memcmp(back.data().data(), m.data().data(), m.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("NPY parse errors are distinct and carry byte offsets") {
  const std::string good = encode_npy(Matrix{{1.0, 2.0}});
  std::string bad_magic = good;
  bad_magic[1] = 'X';
  try {
    decode_npy(bad_magic);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
    CHECK(std::string(e.what()).find("byte offset 0") != std::string::npos);
  }

  const auto be = npy_fixture("{'descr': '>f8', 'fortran_order': False, 'shape': (1,), }",
                              std::string(8, '\0'));
  try {
    decode_npy(be);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unsupported dtype") != std::string::npos);
  }

  const auto fortran = npy_fixture("{'descr': '<f8', 'fortran_order': True, 'shape': (1, 1), }",
                                   std::string(8, '\0'));
  try {
    decode_npy(fortran);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fortran_order") != std::string::npos);
  }

  const std::string truncated = good.substr(0, good.size() - 3);
  try {
    decode_npy(truncated);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("truncated payload") != std::string::npos);
    CHECK(std::string(e.what()).find("byte offset " + std::to_string(truncated.size())) !=
          std::string::npos);
  }

  const auto rank3 = npy_fixture("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }",
                                 std::string(8, '\0'));
  CHECK(kind_of([&] { decode_npy(rank3); }) == ErrorKind::kParse);
}

TEST_CASE("parse_csv examples") {
  CHECK(parse_csv("1,2\n3,4", false) == Matrix{{1, 2}, {3, 4}});
  CHECK(parse_csv("x,y\n1,2", true) == Matrix{{1, 2}});
  CHECK(parse_csv("1.5e-3, -2\r\n", false) == Matrix{{1.5e-3, -2}});
  try {
    parse_csv("1,2\n3", false);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  try {
    parse_csv("1,2\n3,abc\n", false);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("assemble_dataset") {
  TempDir dir;
  std::mt19937_64 rng(1);
  save_npy(testing::random_matrix(rng, 100, 4), dir / "f.npy");
  save_npy(testing::random_matrix(rng, 100, 3), dir / "o.npy");
  save_npy(testing::random_matrix(rng, 99, 3), dir / "o99.npy");
  save_npy(testing::random_labels(rng, 100, 3), dir / "y.npy");
  save_npy(LabelVector(std::vector<Label>(100, 3)), dir / "ybad.npy");

  const Dataset d = assemble_dataset(dir / "f.npy", dir / "o.npy", dir / "y.npy",
                                     SplitRole::kValidation);
  CHECK(d.size() == 100);
  CHECK(d.num_classes() == 3);
  CHECK(d.feature_dim() == 4);

  try {
    assemble_dataset(dir / "f.npy", dir / "o99.npy", dir / "y.npy", SplitRole::kValidation);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDimension);
    const std::string msg = e.what();
    CHECK(msg.find("100") != std::string::npos);
    CHECK(msg.find("99") != std::string::npos);
  }

  const Dataset test = assemble_dataset(dir / "f.npy", dir / "o.npy", std::nullopt, SplitRole::kTest);
  CHECK_FALSE(test.labeled());
  CHECK(kind_of([&] {
          assemble_dataset(dir / "f.npy", dir / "o.npy", std::nullopt, SplitRole::kHoldout);
        }) == ErrorKind::kInvalidInput);
  CHECK(kind_of([&] {
          assemble_dataset(dir / "f.npy", dir / "o.npy", dir / "ybad.npy", SplitRole::kHoldout);
        }) == ErrorKind::kRange);
  CHECK(kind_of([&] {
          assemble_dataset(dir / "missing.npy", dir / "o.npy", dir / "y.npy", SplitRole::kHoldout);
        }) == ErrorKind::kIo);
}

TEST_CASE("make_dataset never builds an inconsistent dataset") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<std::size_t> dim(0, 4);
  int accepted = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t nf = dim(rng), no = dim(rng), nl = dim(rng);
    const std::size_t dz = dim(rng), m = dim(rng), classes = dim(rng) + 1;
    try {
      const Dataset d = make_dataset(testing::random_matrix(rng, nf, dz),
                                     testing::random_matrix(rng, no, m),
                                     testing::random_labels(rng, nl, classes), SplitRole::kHoldout);
      ++accepted;
      CHECK(d.features.rows() == d.logits.rows());
      CHECK(d.labels->size() == d.logits.rows());
      CHECK(d.num_classes() >= 2);
      CHECK(d.feature_dim() >= 1);
      for (Label l : d.labels->values()) CHECK(l < d.num_classes());
    } catch (const Error&) {
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("csv label files") {
  TempDir dir;
  std::ofstream(dir / "y.csv") << "0\n2\n1\n";
  CHECK(load_labels(dir / "y.csv") == LabelVector{0, 2, 1});
  std::ofstream(dir / "f.csv") << "0.5,1\n2,3\n";
  CHECK(load_matrix(dir / "f.csv") == Matrix{{0.5, 1}, {2, 3}});
}
