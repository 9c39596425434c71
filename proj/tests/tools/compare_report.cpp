// Compares two report CSVs cell by cell: text cells exactly, numeric cells
// within a relative tolerance.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

std::vector<std::vector<std::string>> read_csv(const char* path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot read " << path << '\n';
    std::exit(2);
  }
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream s(line);
    std::string cell;
    while (std::getline(s, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

bool parse(const std::string& s, double& v) {
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return !s.empty() && end == s.c_str() + s.size();
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: compare_report ACTUAL EXPECTED REL_TOL\n";
    return 2;
  }
  const auto actual = read_csv(argv[1]);
  const auto expected = read_csv(argv[2]);
  const double tol = std::atof(argv[3]);
  if (actual.size() != expected.size()) {
    std::cerr << "row count " << actual.size() << " != " << expected.size() << '\n';
    return 1;
  }
  int mismatches = 0;
  double worst = 0.0;
  for (std::size_t r = 0; r < actual.size(); ++r) {
    if (actual[r].size() != expected[r].size()) {
      std::cerr << "row " << r << ": column count differs\n";
      ++mismatches;
      continue;
    }
    for (std::size_t c = 0; c < actual[r].size(); ++c) {
      double a = 0.0, e = 0.0;
      if (parse(actual[r][c], a) && parse(expected[r][c], e)) {
        const double rel = std::abs(a - e) / std::max(std::abs(e), 1e-12);
        worst = std::max(worst, rel);
        if (rel > tol) {
          std::cerr << "row " << r << " col " << c << ": " << a << " vs " << e << " (relative " << rel << ")\n";
          ++mismatches;
        }
      } else if (actual[r][c] != expected[r][c]) {
        std::cerr << "row " << r << " col " << c << ": '" << actual[r][c] << "' vs '" << expected[r][c] << "'\n";
        ++mismatches;
      }
    }
  }
  std::cout << "worst relative deviation " << worst << ", " << mismatches << " mismatches\n";
  return mismatches == 0 ? 0 : 1;
}
