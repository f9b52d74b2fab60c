#include "ascfam/pedigree.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ascfam/error.hpp"

namespace ascfam {
namespace {

bool same_double(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

// Nodes of a family graph: members first, then implicit and anonymous
// parents. parent[k] = {father, mother}, -1 for unknown.
struct Graph {
  std::vector<std::array<int, 2>> parent;
  int n_members = 0;
};

Graph build_graph(const Family& family) {
  Graph g;
  g.n_members = static_cast<int>(family.members.size());
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < g.n_members; ++i) index.emplace(family.members[i].id, i);
  g.parent.assign(g.n_members, {-1, -1});
  auto node_for = [&](const std::string& id) {
    auto [it, inserted] = index.emplace(id, static_cast<int>(g.parent.size()));
    if (inserted) g.parent.push_back({-1, -1});
    return it->second;
  };
  for (int i = 0; i < g.n_members; ++i) {
    const Individual& m = family.members[i];
    if (m.is_founder()) continue;
    std::array<int, 2> p{-1, -1};
    if (m.father_id) p[0] = node_for(*m.father_id);
    if (m.mother_id) p[1] = node_for(*m.mother_id);
    for (int& slot : p) {
      if (slot < 0) {
        slot = static_cast<int>(g.parent.size());
        g.parent.push_back({-1, -1});
      }
    }
    g.parent[i] = p;
  }
  return g;
}

// Parents-before-children order; empty optional on a cycle, with the id of
// a node on the cycle in `culprit`.
std::optional<std::vector<int>> topological_order(const Graph& g, int& culprit) {
  const int n = static_cast<int>(g.parent.size());
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<int> order;
  order.reserve(n);
  std::function<bool(int)> visit = [&](int k) {
    if (state[k] == 2) return true;
    if (state[k] == 1) {
      culprit = k;
      return false;
    }
    state[k] = 1;
    for (int p : g.parent[k]) {
      if (p >= 0 && !visit(p)) return false;
    }
    state[k] = 2;
    order.push_back(k);
    return true;
  };
  for (int k = 0; k < n; ++k) {
    if (!visit(k)) return std::nullopt;
  }
  return order;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Prefer the shortest representation that round-trips.
  for (int precision = 1; precision < 17; ++precision) {
    char shorter[32];
    std::snprintf(shorter, sizeof shorter, "%.*g", precision, v);
    if (std::strtod(shorter, nullptr) == v) return shorter;
  }
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  fields.push_back(current);
  for (std::string& f : fields) {
    const auto first = f.find_first_not_of(" \t");
    const auto last = f.find_last_not_of(" \t");
    f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
  }
  return fields;
}

[[noreturn]] void fail(int line_no, const std::string& what) {
  throw InputError("pedigree line " + std::to_string(line_no) + ": " + what);
}

std::optional<double> parse_real(const std::string& text, int line_no, const char* column) {
  if (text.empty()) return std::nullopt;
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail(line_no, std::string("malformed ") + column + " '" + text + "'");
  }
  return value;
}

const char* const kFixedColumns[] = {"family_id", "individual_id", "father_id", "mother_id",
                                     "sex",       "primary",       "secondary", "genotype"};
constexpr int kNumFixed = 8;

}  // namespace

int Family::index_of(const std::string& member_id) const {
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (members[i].id == member_id) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> Family::implicit_parents() const {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const Individual& m : members) {
    for (const auto& p : {m.father_id, m.mother_id}) {
      if (p && index_of(*p) < 0 && seen.insert(*p).second) out.push_back(*p);
    }
  }
  return out;
}

std::size_t Cohort::n_individuals() const {
  std::size_t n = 0;
  for (const Family& f : families) n += f.members.size();
  return n;
}

bool operator==(const Individual& a, const Individual& b) {
  if (a.id != b.id || a.father_id != b.father_id || a.mother_id != b.mother_id ||
      a.sex != b.sex || a.primary != b.primary || a.secondary != b.secondary ||
      a.genotype != b.genotype || a.covariates.size() != b.covariates.size()) {
    return false;
  }
  for (std::size_t k = 0; k < a.covariates.size(); ++k) {
    if (!same_double(a.covariates[k], b.covariates[k])) return false;
  }
  return true;
}

bool operator==(const Family& a, const Family& b) {
  return a.id == b.id && a.members == b.members && a.relationship == b.relationship;
}

bool operator==(const Cohort& a, const Cohort& b) {
  return a.genetic_mode == b.genetic_mode && a.covariate_names == b.covariate_names &&
         a.families == b.families;
}

Eigen::MatrixXd relationship_matrix(const Family& family) {
  const Graph g = build_graph(family);
  int culprit = -1;
  const auto order = topological_order(g, culprit);
  if (!order) {
    const std::string who =
        culprit < g.n_members ? family.members[culprit].id : std::string("an implicit parent");
    throw InputError("family " + family.id + ": self-ancestry involving " + who);
  }
  const int total = static_cast<int>(g.parent.size());
  // Kinship coefficients filled in topological order: when i is processed,
  // every j with rank < rank(i) is not a descendant of i.
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(total, total);
  for (int r = 0; r < total; ++r) {
    const int i = (*order)[r];
    const auto [f, m] = g.parent[i];
    const bool founder = f < 0;
    for (int s = 0; s < r; ++s) {
      const int j = (*order)[s];
      const double v = founder ? 0.0 : 0.5 * (phi(f, j) + phi(m, j));
      phi(i, j) = v;
      phi(j, i) = v;
    }
    phi(i, i) = founder ? 0.5 : 0.5 * (1.0 + phi(f, m));
  }
  const int n = g.n_members;
  Eigen::MatrixXd r = 2.0 * phi.topLeftCorner(n, n);
  r.diagonal().setOnes();
  return r;
}

std::vector<Diagnostic> validate(const Family& family) {
  std::vector<Diagnostic> out;
  auto add = [&](Diagnostic::Severity sev, const std::string& member, const char* rule,
                 std::string message) {
    out.push_back({sev, family.id, member, rule, std::move(message)});
  };
  const auto E = Diagnostic::Severity::error;

  std::set<std::string> ids;
  std::size_t arity = family.members.empty() ? 0 : family.members.front().covariates.size();
  for (const Individual& m : family.members) {
    if (!ids.insert(m.id).second) add(E, m.id, "unique-id", "duplicate individual id");
    if (m.father_id.has_value() != m.mother_id.has_value()) {
      add(E, m.id, "both-parents", "exactly one of father_id/mother_id is set");
    }
    if ((m.father_id && *m.father_id == m.id) || (m.mother_id && *m.mother_id == m.id)) {
      add(E, m.id, "self-ancestry", "individual is listed as its own parent");
    }
    if (m.father_id && m.mother_id && *m.father_id == *m.mother_id) {
      add(E, m.id, "distinct-parents", "father and mother are the same individual");
    }
    if (m.primary && *m.primary != 0 && *m.primary != 1) {
      add(E, m.id, "primary-binary", "primary phenotype must be 0 or 1");
    }
    if (m.covariates.size() != arity) {
      add(E, m.id, "covariate-arity", "covariate count differs within the family");
    }
    if (m.primary && !m.secondary && !m.genotype) {
      add(Diagnostic::Severity::info, m.id, "partial-data",
          "primary phenotype present but secondary phenotype and genotype absent");
    }
  }
  if (out.empty() || std::none_of(out.begin(), out.end(), [](const Diagnostic& d) {
        return d.rule == std::string("self-ancestry");
      })) {
    const Graph g = build_graph(family);
    int culprit = -1;
    if (!topological_order(g, culprit)) {
      add(E, culprit < g.n_members ? family.members[culprit].id : std::string(),
          "self-ancestry", "individual is its own ancestor");
    }
  }
  const auto n = static_cast<Eigen::Index>(family.members.size());
  if (family.relationship.size() != 0) {
    const Eigen::MatrixXd& r = family.relationship;
    if (r.rows() != n || r.cols() != n) {
      add(E, "", "relationship-shape", "relationship matrix does not match member count");
    } else if (!r.diagonal().isOnes(0.0) || !r.isApprox(r.transpose(), 0.0) ||
               r.minCoeff() < 0.0 || r.maxCoeff() > 1.0) {
      add(E, "", "relationship-values",
          "relationship matrix must be symmetric with unit diagonal and entries in [0,1]");
    }
  }
  return out;
}

Cohort parse_pedigree(std::istream& in, GeneticMode mode) {
  Cohort cohort;
  cohort.genetic_mode = mode;
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw InputError("pedigree: empty input, header row required");
  if (static_cast<int>(header.size()) < kNumFixed) fail(line_no, "header has too few columns");
  for (int k = 0; k < kNumFixed; ++k) {
    if (header[k] != kFixedColumns[k]) {
      fail(line_no, std::string("expected column '") + kFixedColumns[k] + "', found '" +
                        header[k] + "'");
    }
  }
  cohort.covariate_names.assign(header.begin() + kNumFixed, header.end());

  std::map<std::string, std::size_t> family_index;
  std::set<std::pair<std::string, std::string>> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      fail(line_no, "expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(f.size()));
    }
    if (f[0].empty()) fail(line_no, "empty family_id");
    if (f[1].empty()) fail(line_no, "empty individual_id");
    if (!seen.emplace(f[0], f[1]).second) {
      fail(line_no, "duplicate individual '" + f[1] + "' in family '" + f[0] + "'");
    }
    Individual ind;
    ind.id = f[1];
    if (!f[2].empty()) ind.father_id = f[2];
    if (!f[3].empty()) ind.mother_id = f[3];
    if ((ind.father_id && *ind.father_id == ind.id) ||
        (ind.mother_id && *ind.mother_id == ind.id)) {
      fail(line_no, "self-ancestry: '" + ind.id + "' is listed as its own parent");
    }
    if (f[4] == "M") {
      ind.sex = Sex::male;
    } else if (f[4] == "F") {
      ind.sex = Sex::female;
    } else if (f[4] == "U" || f[4].empty()) {
      ind.sex = Sex::unknown;
    } else {
      fail(line_no, "malformed sex '" + f[4] + "' (expected M, F or U)");
    }
    if (f[5] == "0" || f[5] == "1") {
      ind.primary = f[5][0] - '0';
    } else if (!f[5].empty()) {
      fail(line_no, "malformed primary '" + f[5] + "' (expected 0, 1 or empty)");
    }
    ind.secondary = parse_real(f[6], line_no, "secondary");
    if (mode == GeneticMode::snp) {
      if (f[7] == "0" || f[7] == "1" || f[7] == "2") {
        ind.genotype = f[7][0] - '0';
      } else if (!f[7].empty()) {
        fail(line_no, "malformed genotype '" + f[7] + "' (expected 0, 1, 2 or empty)");
      }
    } else {
      ind.genotype = parse_real(f[7], line_no, "genotype");
    }
    for (std::size_t k = kNumFixed; k < f.size(); ++k) {
      const auto v = parse_real(f[k], line_no, header[k].c_str());
      ind.covariates.push_back(v ? *v : std::nan(""));
    }
    auto [it, inserted] = family_index.emplace(f[0], cohort.families.size());
    if (inserted) {
      cohort.families.emplace_back();
      cohort.families.back().id = f[0];
    }
    cohort.families[it->second].members.push_back(std::move(ind));
  }
  for (Family& family : cohort.families) family.relationship = relationship_matrix(family);
  return cohort;
}

Cohort read_pedigree(const std::string& path, GeneticMode mode) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open pedigree file '" + path + "'");
  return parse_pedigree(in, mode);
}

Cohort select_covariates(const Cohort& cohort, const std::vector<std::string>& names) {
  std::vector<std::size_t> columns;
  for (const std::string& name : names) {
    const auto it = std::find(cohort.covariate_names.begin(), cohort.covariate_names.end(), name);
    if (it == cohort.covariate_names.end()) {
      throw InputError("unknown covariate '" + name + "'");
    }
    columns.push_back(static_cast<std::size_t>(it - cohort.covariate_names.begin()));
  }
  Cohort out = cohort;
  out.covariate_names = names;
  for (Family& family : out.families) {
    for (Individual& ind : family.members) {
      std::vector<double> kept;
      kept.reserve(columns.size());
      for (std::size_t c : columns) kept.push_back(ind.covariates.at(c));
      ind.covariates = std::move(kept);
    }
  }
  return out;
}

void write_pedigree(std::ostream& out, const Cohort& cohort) {
  for (int k = 0; k < kNumFixed; ++k) out << (k ? "," : "") << kFixedColumns[k];
  for (const std::string& name : cohort.covariate_names) out << ',' << name;
  out << '\n';
  for (const Family& family : cohort.families) {
    for (const Individual& m : family.members) {
      out << family.id << ',' << m.id << ',' << m.father_id.value_or("") << ','
          << m.mother_id.value_or("") << ','
          << (m.sex == Sex::male ? "M" : m.sex == Sex::female ? "F" : "U") << ',';
      if (m.primary) out << *m.primary;
      out << ',';
      if (m.secondary) out << format_double(*m.secondary);
      out << ',';
      if (m.genotype) out << format_double(*m.genotype);
      for (double c : m.covariates) {
        out << ',';
        if (!std::isnan(c)) out << format_double(c);
      }
      out << '\n';
    }
  }
}

void write_pedigree(const std::string& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write pedigree file '" + path + "'");
  write_pedigree(out, cohort);
}

}  // namespace ascfam
