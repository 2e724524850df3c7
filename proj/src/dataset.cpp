#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "qsmc/errors.hpp"
#include "qsmc/models.hpp"

namespace qsmc {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\"");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

void standardize(Dataset& ds, const std::vector<int>& cols) {
  std::ostringstream note;
  note.precision(17);
  const double n = static_cast<double>(ds.rows());
  for (int c : cols) {
    auto col = ds.values.col(c);
    double mean = col.mean();
    double var = (col.array() - mean).square().sum() / (n - 1.0);
    double sd = std::sqrt(var);
    if (!(sd > 0.0)) throw DataError("column '" + ds.columns[c] + "' is constant");
    col = (col.array() - mean) / sd;
    note << "; standardized " << ds.columns[c] << " mean=" << mean << " sd=" << sd;
  }
  ds.provenance += note.str();
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  Dataset ds;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  ds.columns = split(line);
  if (ds.columns.empty() || ds.columns[0].empty()) throw DataError(origin + ": missing header");
  std::vector<std::vector<double>> rows;
  const std::size_t width = ds.columns.size();
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split(line);
    if (cells.size() != width)
      throw DataError(origin + ": line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " fields, expected " + std::to_string(width));
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c) {
      const std::string& cell = cells[c];
      if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan")
        throw DataError(origin + ": missing value at line " + std::to_string(line_no) +
                        ", column '" + ds.columns[c] + "'");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError(origin + ": non-numeric value '" + cell + "' at line " +
                        std::to_string(line_no) + ", column '" + ds.columns[c] + "'");
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(origin + ": no data rows");
  ds.values.resize(rows.size(), width);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c) ds.values(r, c) = rows[r][c];
  ds.provenance = origin;
  return ds;
}

Dataset load_csv(const std::string& path, Family family) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  Dataset ds = parse_csv(buf.str(), path);
  if (family != Family::LogisticRegression) return ds;

  int total = ds.column_index("total"), succ = ds.column_index("successes");
  if (total < 0 && succ < 0) {
    total = ds.column_index("Total");
    succ = ds.column_index("Menarche");
  }
  if ((total < 0) != (succ < 0)) throw DataError(path + ": grouped data needs both count columns");

  std::vector<int> covariates;
  Dataset out;
  if (total >= 0) {
    for (int c = 0; c < static_cast<int>(ds.columns.size()); ++c)
      if (c != total && c != succ) covariates.push_back(c);
    std::size_t n = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      double t = ds.values(r, total), s = ds.values(r, succ);
      if (t < 0 || s < 0 || s > t || t != std::floor(t) || s != std::floor(s))
        throw DataError(path + ": invalid counts at data row " + std::to_string(r + 1));
      n += static_cast<std::size_t>(t);
    }
    if (n == 0) throw DataError(path + ": grouped data has zero total count");
    for (int c : covariates) out.columns.push_back(ds.columns[c]);
    out.columns.push_back("y");
    out.values.resize(n, covariates.size() + 1);
    std::size_t k = 0;
    for (std::size_t r = 0; r < ds.rows(); ++r) {
      auto t = static_cast<std::size_t>(ds.values(r, total));
      auto s = static_cast<std::size_t>(ds.values(r, succ));
      for (std::size_t m = 0; m < t; ++m, ++k) {
        for (std::size_t c = 0; c < covariates.size(); ++c)
          out.values(k, c) = ds.values(r, covariates[c]);
        out.values(k, covariates.size()) = m < s ? 1.0 : 0.0;
      }
    }
    out.provenance = path + " (grouped, expanded to " + std::to_string(n) + " Bernoulli rows)";
    covariates.clear();
    for (int c = 0; c + 1 < static_cast<int>(out.columns.size()); ++c) covariates.push_back(c);
  } else {
    int yc = ds.column_index("y");
    if (yc < 0) throw DataError(path + ": logistic data needs a 'y' column or grouped counts");
    for (int c = 0; c < static_cast<int>(ds.columns.size()); ++c)
      if (c != yc) covariates.push_back(c);
    out = std::move(ds);
  }
  if (out.rows() < 2) throw DataError(path + ": need at least two rows to standardize");
  standardize(out, covariates);
  return out;
}

}  // namespace qsmc
