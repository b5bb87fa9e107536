#include "qelab/csv.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

#include "qelab/paths.hpp"

namespace qelab {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

namespace {

std::string escape(const std::string& s) {
  bool need = s.find_first_of(",\"\r\n") != std::string::npos;
  if (!need) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string cell_text(const CsvCell& c) {
  if (std::holds_alternative<std::string>(c)) return escape(std::get<std::string>(c));
  if (std::holds_alternative<double>(c)) return format_double(std::get<double>(c));
  if (std::holds_alternative<long>(c)) return std::to_string(std::get<long>(c));
  return std::to_string(std::get<int>(c));
}

}  // namespace

CsvWriter::CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

void CsvWriter::row(std::vector<CsvCell> cells) {
  if (cells.size() != header_.size())
    throw std::invalid_argument("csv row width does not match header");
  std::vector<std::string> r;
  r.reserve(cells.size());
  for (auto& c : cells) r.push_back(cell_text(c));
  rows_.push_back(std::move(r));
}

void CsvWriter::write(std::ostream& os) const {
  auto emit = [&os](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) os << ',';
      os << r[i];
    }
    os << "\r\n";
  };
  emit(header_);
  for (const auto& r : rows_) emit(r);
}

std::string CsvWriter::str() const {
  std::ostringstream ss;
  write(ss);
  return ss.str();
}

CsvWriter kernel_csv(const GradedKernel& K) {
  CsvWriter csv({"k", "path_id", "re", "im"});
  for (const auto& [k, comp] : K.shells)
    for (long id = 0; id < comp.values.size(); ++id)
      csv.row({long(k), id, comp.values(id).real(), comp.values(id).imag()});
  return csv;
}

}  // namespace qelab
