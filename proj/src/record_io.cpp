#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "nsinv/errors.hpp"
#include "nsinv/forward.hpp"

namespace nsinv {

namespace {

constexpr char kMagic[8] = {'N', 'S', 'I', 'N', 'V', 'B', 'R', '1'};
constexpr int kSchemaVersion = 1;

static_assert(std::endian::native == std::endian::little, "record files are little-endian");

void write_matrix(std::ofstream& os, const Eigen::MatrixXd& m) {
  // Row-major: level by level.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  os.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
}

Eigen::MatrixXd read_matrix(std::ifstream& is, int rows, int cols) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  is.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!is) throw DataError("record: truncated data block");
  return rm;
}

}  // namespace

void write_record(const std::string& path, const BoundaryRecord& rec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path + " for writing");
  nlohmann::json h;
  h["schema_version"] = kSchemaVersion;
  h["kind"] = "boundary_record";
  h["nx"] = rec.nx;
  h["ny"] = rec.ny;
  h["dt"] = rec.dt;
  h["T"] = rec.T;
  h["levels"] = rec.levels();
  h["boundary_count"] = rec.boundary_count();
  h["noise_level"] = rec.noise_level;
  h["rng_seed"] = rec.rng_seed;
  h["boundary_order"] = "bottom(left->right),right(bottom->top),top(right->left),left(top->bottom)";
  h["blocks"] = {"times", "g1", "g2", "h1", "h2"};
  h["layout"] = "float64 little-endian, level-major";
  const std::string header = h.dump();
  const std::uint64_t len = header.size();
  os.write(kMagic, sizeof(kMagic));
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(header.data(), static_cast<std::streamsize>(len));
  os.write(reinterpret_cast<const char*>(rec.times.data()),
           static_cast<std::streamsize>(rec.times.size() * sizeof(double)));
  for (const Eigen::MatrixXd* m : {&rec.g1, &rec.g2, &rec.h1, &rec.h2}) write_matrix(os, *m);
  if (!os) throw DataError("record: write failed for " + path);
}

BoundaryRecord read_record(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path + ": not a boundary record file");
  }
  std::uint64_t len = 0;
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || len > (1u << 20)) throw DataError(path + ": bad header length");
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  const nlohmann::json h = nlohmann::json::parse(header);
  if (h.at("schema_version").get<int>() != kSchemaVersion) {
    throw DataError(path + ": unsupported schema_version");
  }
  BoundaryRecord rec;
  rec.nx = h.at("nx");
  rec.ny = h.at("ny");
  rec.dt = h.at("dt");
  rec.T = h.at("T");
  rec.noise_level = h.at("noise_level");
  rec.rng_seed = h.at("rng_seed");
  const int levels = h.at("levels");
  const int nb = h.at("boundary_count");
  if (nb != 2 * rec.nx + 2 * rec.ny - 4) throw DataError(path + ": boundary count inconsistent with grid");
  rec.times.resize(levels);
  is.read(reinterpret_cast<char*>(rec.times.data()), static_cast<std::streamsize>(levels * sizeof(double)));
  rec.g1 = read_matrix(is, levels, nb);
  rec.g2 = read_matrix(is, levels, nb);
  rec.h1 = read_matrix(is, levels, nb);
  rec.h2 = read_matrix(is, levels, nb);
  return rec;
}

}  // namespace nsinv
