#pragma once

#include <string>
#include <vector>

#include "alto/geometry.hpp"
#include "alto/mesh.hpp"

namespace alto {

// Point clouds: one "x y z" triple per line; '#' starts a comment; blank
// lines are skipped. Doubles are written with enough digits to round-trip.
std::vector<Vec3> read_xyz(const std::string& path);
void write_xyz(const std::string& path, const std::vector<Vec3>& pts);

// ASCII OBJ with "v x y z" and triangular "f i j k" records (1-based
// indices). The reader accepts "i/..." vertex references and skips unrelated
// record types; faces with more or fewer than 3 vertices are rejected.
Mesh read_obj(const std::string& path);
void write_obj(const std::string& path, const Mesh& mesh);

// Loss log: header "step,sum_loss,mean_loss", then one row per step with the
// global 1-based step index.
void write_loss_csv(const std::string& path, const std::vector<double>& sum_loss,
                    const std::vector<double>& mean_loss, std::size_t start_step = 0);

// Occupancy labels: one "0" or "1" per line.
std::vector<int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<double>& labels);

}  // namespace alto
