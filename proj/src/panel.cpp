#include "erfe/panel.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include "erfe/csv.hpp"

namespace erfe {

AsymmetricPoint::AsymmetricPoint(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("asymmetric point must lie strictly inside (0, 1), got " +
                                std::to_string(tau));
  }
}

Eigen::VectorXd check_weights(const Eigen::VectorXd& residuals, AsymmetricPoint tau) {
  Eigen::VectorXd w(residuals.size());
  for (Eigen::Index i = 0; i < residuals.size(); ++i) w[i] = check_weight(residuals[i], tau);
  return w;
}

double asymmetric_risk(const Eigen::VectorXd& residuals, AsymmetricPoint tau) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) total += asymmetric_loss(residuals[i], tau);
  return total;
}

PanelData::PanelData(std::vector<std::string> subject_labels, Eigen::VectorXd y,
                     Eigen::MatrixXd x, std::vector<std::string> column_names) {
  const auto n_obs = static_cast<std::size_t>(y.size());
  if (n_obs == 0) throw EmptyInput("panel has no observations");
  if (subject_labels.size() != n_obs || static_cast<std::size_t>(x.rows()) != n_obs) {
    throw ShapeMismatch("subject labels, response and design must have the same number of rows");
  }
  if (column_names.empty()) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) column_names.push_back("x" + std::to_string(j + 1));
  }
  if (column_names.size() != static_cast<std::size_t>(x.cols())) {
    throw ShapeMismatch("column_names size does not match design width");
  }
  if (!y.allFinite() || !x.allFinite()) throw std::invalid_argument("panel contains non-finite values");

  // Stable grouping: subjects by first appearance, rows in input order.
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < n_obs; ++r) {
    auto [it, inserted] = index.try_emplace(subject_labels[r], members.size());
    if (inserted) {
      members.emplace_back();
      labels_.push_back(subject_labels[r]);
    }
    members[it->second].push_back(r);
  }

  y_.resize(static_cast<Eigen::Index>(n_obs));
  x_.resize(static_cast<Eigen::Index>(n_obs), x.cols());
  offsets_.reserve(members.size() + 1);
  offsets_.push_back(0);
  std::size_t row = 0;
  for (std::size_t s = 0; s < members.size(); ++s) {
    if (members[s].size() < 2) {
      throw SingletonSubject("subject '" + labels_[s] + "' has a single observation");
    }
    for (std::size_t r : members[s]) {
      const auto dst = static_cast<Eigen::Index>(row);
      const auto src = static_cast<Eigen::Index>(r);
      y_[dst] = y[src];
      x_.row(dst) = x.row(src);
      row_subject_.push_back(s);
      input_row_.push_back(r);
      ++row;
    }
    offsets_.push_back(row);
  }
  columns_ = std::move(column_names);
}

PanelData PanelData::with_response(Eigen::VectorXd y) const {
  if (y.size() != y_.size()) throw ShapeMismatch("replacement response has wrong length");
  PanelData out = *this;
  out.y_ = std::move(y);
  return out;
}

PanelData PanelData::with_columns(std::span<const std::size_t> keep) const {
  PanelData out = *this;
  out.x_.resize(x_.rows(), static_cast<Eigen::Index>(keep.size()));
  out.columns_.clear();
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (keep[k] >= num_regressors()) throw ShapeMismatch("column index out of range");
    out.x_.col(static_cast<Eigen::Index>(k)) = x_.col(static_cast<Eigen::Index>(keep[k]));
    out.columns_.push_back(columns_[keep[k]]);
  }
  return out;
}

PanelData build_panel(std::span<const PanelRecord> records, std::vector<std::string> column_names) {
  if (records.empty()) throw EmptyInput("no records supplied");
  const std::size_t width = records.front().x.size();
  const auto n = static_cast<Eigen::Index>(records.size());
  std::vector<std::string> labels;
  labels.reserve(records.size());
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.x.size() != width) {
      throw RaggedRow("record " + std::to_string(r) + " has " + std::to_string(rec.x.size()) +
                      " regressors, expected " + std::to_string(width));
    }
    labels.push_back(rec.subject);
    y[static_cast<Eigen::Index>(r)] = rec.y;
    for (std::size_t j = 0; j < width; ++j) {
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rec.x[j];
    }
  }
  return PanelData(std::move(labels), std::move(y), std::move(x), std::move(column_names));
}

PanelData read_panel_csv(std::istream& in, const CsvPanelOptions& options) {
  const CsvTable table = read_csv(in);
  if (table.header.size() < 2) throw ParseError("panel CSV needs subject and response columns");
  const std::size_t subject_col =
      options.subject_col.empty() ? 0 : table.column(options.subject_col);
  const std::size_t response_col =
      options.response_col.empty() ? 1 : table.column(options.response_col);
  if (subject_col == response_col) throw ParseError("subject and response columns coincide");

  std::vector<std::size_t> regressors;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < table.header.size(); ++j) {
    if (j == subject_col || j == response_col) continue;
    bool excluded = false;
    for (const auto& e : options.exclude) excluded = excluded || e == table.header[j];
    if (excluded) continue;
    regressors.push_back(j);
    names.push_back(table.header[j]);
  }
  for (const auto& e : options.exclude) table.column(e);

  std::vector<PanelRecord> records;
  records.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string where = "data row " + std::to_string(r + 1);
    PanelRecord rec;
    rec.subject = row[subject_col];
    if (rec.subject.empty()) throw ParseError("empty subject id at " + where);
    rec.y = parse_double(row[response_col], where + ", column " + table.header[response_col]);
    for (std::size_t j : regressors) {
      rec.x.push_back(parse_double(row[j], where + ", column " + table.header[j]));
    }
    records.push_back(std::move(rec));
  }
  return build_panel(records, std::move(names));
}

PanelData read_panel_csv_file(const std::string& path, const CsvPanelOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_panel_csv(in, options);
}

}  // namespace erfe
