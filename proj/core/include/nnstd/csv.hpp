#pragma once
#include <filesystem>
#include <string>
#include <vector>

#include "nnstd/matrix.hpp"

namespace nnstd {

// Square matrix with row/column labels, e.g. a pairwise distance table.
struct LabeledMatrix {
  std::vector<std::string> labels;
  Matrix values;
};

// Header row "", label..., then one row per label; values with six decimals.
void write_matrix_csv(const std::filesystem::path& path, const LabeledMatrix& m);
LabeledMatrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace nnstd
