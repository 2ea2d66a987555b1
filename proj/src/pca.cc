/*
 * Copyright 2026 The ppgrisk Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "ppgrisk/pca.h"

#include <cmath>
#include <string>

#include "ppgrisk/errors.h"
#include "text.h"

namespace ppgrisk {

PcaModel FitPca(const Eigen::MatrixXd& x, std::size_t k) {
  if (x.rows() < 5) {
    throw ValidationError("pca needs at least 5 rows, got " +
                          std::to_string(x.rows()));
  }
  if (x.cols() == 0) throw ValidationError("pca on zero-width data");
  if (!x.allFinite()) throw ValidationError("pca input has non-finite entries");
  const Eigen::Index d = x.cols();
  const Eigen::Index kk = std::min<Eigen::Index>(static_cast<Eigen::Index>(k), d);

  PcaModel m;
  m.mean = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - m.mean.transpose();
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca eigensolver failed");

  // Eigen returns ascending eigenvalues.
  m.components.resize(kk, d);
  m.explained_variance.resize(kk);
  for (Eigen::Index r = 0; r < kk; ++r) {
    const Eigen::Index src = d - 1 - r;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < d; ++j) {
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    }
    if (v(arg) < 0.0) v = -v;
    m.components.row(r) = v.transpose();
    m.explained_variance(r) = std::max(0.0, eig.eigenvalues()(src));
  }
  return m;
}

PcaModel FitPca(const std::vector<std::vector<double>>& rows, std::size_t k) {
  if (rows.empty()) throw ValidationError("pca needs at least 5 rows, got 0");
  Eigen::MatrixXd x(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) {
      throw ValidationError("pca rows differ in width");
    }
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(i, j) = rows[i][j];
  }
  return FitPca(x, k);
}

Eigen::VectorXd Project(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw ValidationError("projection input has width " + std::to_string(x.size()) +
                          ", expected " + std::to_string(model.dim()));
  }
  const Eigen::Map<const Eigen::VectorXd> v(x.data(), x.size());
  return model.components * (v - model.mean);
}

Eigen::MatrixXd ProjectRows(const PcaModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim()) {
    throw ValidationError("projection input has the wrong width");
  }
  return (x.rowwise() - model.mean.transpose()) * model.components.transpose();
}

namespace {

void WriteRow(std::ostream& out, const Eigen::VectorXd& v, Eigen::Index width) {
  for (Eigen::Index j = 0; j < width; ++j) {
    if (j > 0) out << ',';
    if (j < v.size()) out << internal::FormatDouble(v(j));
  }
  out << '\n';
}

}  // namespace

void WritePcaCsv(std::ostream& out, const PcaModel& model) {
  const Eigen::Index d = model.mean.size();
  WriteRow(out, model.mean, d);
  for (Eigen::Index r = 0; r < model.components.rows(); ++r) {
    WriteRow(out, model.components.row(r).transpose(), d);
  }
  WriteRow(out, model.explained_variance, d);
}

PcaModel ReadPcaCsv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (internal::Trim(line).empty()) continue;
    std::vector<double> row;
    for (std::string_view f : internal::SplitFields(line)) {
      if (f.empty()) continue;
      auto v = internal::ParseDouble(f);
      if (!v) throw ValidationError("pca file line " + std::to_string(line_no) +
                                    ": bad number \"" + std::string(f) + "\"");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 3) throw ValidationError("pca file is truncated");
  const std::size_t d = rows.front().size();
  const std::size_t k = rows.size() - 2;
  if (rows.back().size() != k) throw ValidationError("pca variance row has wrong width");
  PcaModel m;
  m.mean = Eigen::Map<Eigen::VectorXd>(rows.front().data(), d);
  m.components.resize(k, d);
  for (std::size_t r = 0; r < k; ++r) {
    if (rows[r + 1].size() != d) throw ValidationError("pca component row has wrong width");
    for (std::size_t j = 0; j < d; ++j) m.components(r, j) = rows[r + 1][j];
  }
  m.explained_variance = Eigen::Map<Eigen::VectorXd>(rows.back().data(), k);
  return m;
}

}  // namespace ppgrisk
