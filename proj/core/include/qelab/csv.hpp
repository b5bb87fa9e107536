#ifndef QELAB_CSV_HPP
#define QELAB_CSV_HPP

#include <complex>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

namespace qelab {

/// Shortest decimal string that round-trips to the same double.
std::string format_double(double v);

using CsvCell = std::variant<std::string, double, long, int>;

/// RFC-4180 table writer: mandatory header row, CRLF line endings,
/// quoting only where required, doubles as shortest round-trip decimals.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(std::vector<CsvCell> cells);
  void write(std::ostream& os) const;
  std::string str() const;
  std::size_t rows() const { return rows_.size(); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct GradedKernel;

/// Kernel dump: rows (k, path_id, re, im); path ids decode through the
/// shell's path index.
CsvWriter kernel_csv(const GradedKernel& K);

}  // namespace qelab

#endif
