#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <istream>
#include <span>
#include <string>
#include <vector>

#include "erfe/error.hpp"

namespace erfe {

// Asymmetry level of an expectile, restricted to the open unit interval.
class AsymmetricPoint {
 public:
  explicit AsymmetricPoint(double tau);

  double value() const noexcept { return tau_; }
  operator double() const noexcept { return tau_; }

 private:
  double tau_;
};

// psi_tau(t) = |tau - 1(t <= 0)|: tau for positive residuals, 1 - tau otherwise.
inline double check_weight(double t, AsymmetricPoint tau) noexcept {
  return t > 0.0 ? tau.value() : 1.0 - tau.value();
}

// rho_tau(t) = psi_tau(t) * t^2.
inline double asymmetric_loss(double t, AsymmetricPoint tau) noexcept {
  return check_weight(t, tau) * t * t;
}

// Diagonal of Psi_tau evaluated at a residual vector.
Eigen::VectorXd check_weights(const Eigen::VectorXd& residuals, AsymmetricPoint tau);

// Sum of rho_tau over a residual vector.
double asymmetric_risk(const Eigen::VectorXd& residuals, AsymmetricPoint tau);

struct PanelRecord {
  std::string subject;
  double y = 0.0;
  std::vector<double> x;
};

// Long-format panel. Rows are stored grouped by subject (subjects in order of
// first appearance, rows within a subject in input order), so subject i owns
// the contiguous row range [offset(i), offset(i) + size(i)). The incidence
// matrix Z is never formed.
class PanelData {
 public:
  PanelData(std::vector<std::string> subject_labels, Eigen::VectorXd y, Eigen::MatrixXd x,
            std::vector<std::string> column_names);

  std::size_t num_obs() const noexcept { return static_cast<std::size_t>(y_.size()); }
  std::size_t num_subjects() const noexcept { return labels_.size(); }
  std::size_t num_regressors() const noexcept { return static_cast<std::size_t>(x_.cols()); }

  std::size_t offset(std::size_t subject) const { return offsets_[subject]; }
  std::size_t size(std::size_t subject) const { return offsets_[subject + 1] - offsets_[subject]; }

  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const std::vector<std::string>& column_names() const noexcept { return columns_; }
  const std::vector<std::string>& subject_labels() const noexcept { return labels_; }

  // Subject index (0-based) of each grouped row.
  const std::vector<std::size_t>& row_subject() const noexcept { return row_subject_; }
  // Position in the original input of each grouped row.
  const std::vector<std::size_t>& input_row() const noexcept { return input_row_; }

  // Same data with response replaced; grouping unchanged.
  PanelData with_response(Eigen::VectorXd y) const;
  // Same data restricted to the given regressor columns.
  PanelData with_columns(std::span<const std::size_t> keep) const;

 private:
  PanelData() = default;

  std::vector<std::string> labels_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> row_subject_;
  std::vector<std::size_t> input_row_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
  std::vector<std::string> columns_;
};

// Groups records by subject. Throws EmptyInput, RaggedRow or SingletonSubject.
PanelData build_panel(std::span<const PanelRecord> records,
                      std::vector<std::string> column_names = {});

struct CsvPanelOptions {
  std::string subject_col;   // empty: first column
  std::string response_col;  // empty: second column
  std::vector<std::string> exclude;
};

// Reads a long-format CSV with a header row. Every column other than the
// subject and response (and any excluded ones) becomes a regressor.
PanelData read_panel_csv(std::istream& in, const CsvPanelOptions& options = {});
PanelData read_panel_csv_file(const std::string& path, const CsvPanelOptions& options = {});

}  // namespace erfe
