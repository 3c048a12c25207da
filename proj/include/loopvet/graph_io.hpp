#pragma once

// Text serialization of pose graphs.
//
//   PGRAPH 1
//   NODE <id> <map_id>
//   EDGE <EGO|LC> <id> <src> <dst> <r00> ... <r22> [PRIOR <p>] [TRUTH <IN|OUT>]
//
// '#' starts a comment. PRIOR defaults to 1 for EGO and 0.5 for LC.

#include <Eigen/Geometry>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "loopvet/graph.hpp"

namespace loopvet {

inline constexpr int kGraphFormatVersion = 1;
inline constexpr double kParseOrthoTolerance = 1e-6;

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(line, std::string("bad ") + what + " '" + std::string(tok) + "'");
  }
  return value;
}

/// Accepts matrices within kParseOrthoTolerance of SO(3) and projects them.
inline so3::RotationMatrix checked_rotation(const so3::Matrix3& m, std::size_t line) {
  if (!m.allFinite()) throw ParseError(line, "non-finite rotation entry");
  const double ortho = (m * m.transpose() - so3::Matrix3::Identity()).norm();
  const double det = m.determinant();
  if (ortho > kParseOrthoTolerance || std::abs(det - 1.0) > kParseOrthoTolerance) {
    throw ParseError(line, "rotation is not orthonormal (|RR^T-I|=" + std::to_string(ortho) +
                               ", det=" + std::to_string(det) + ")");
  }
  if (so3::is_rotation(m, 1e-13)) return m;
  return so3::project_to_so3(m);
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline PoseGraph parse_graph(std::istream& in) {
  std::vector<Node> nodes;
  std::vector<Edge> edges;
  std::vector<std::size_t> edge_lines;
  std::map<NodeId, std::size_t> node_lines;
  std::map<EdgeId, std::size_t> edge_id_lines;
  bool seen_record = false;

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) continue;

    if (tok[0] == "PGRAPH") {
      if (seen_record) throw ParseError(lineno, "PGRAPH header must come first");
      if (tok.size() != 2) throw ParseError(lineno, "PGRAPH expects a version");
      const int version = detail::parse_number<int>(tok[1], lineno, "version");
      if (version != kGraphFormatVersion) {
        throw ParseError(lineno, "unsupported format version " + std::to_string(version));
      }
      seen_record = true;
      continue;
    }
    seen_record = true;

    if (tok[0] == "NODE") {
      if (tok.size() != 3) throw ParseError(lineno, "NODE expects <id> <map_id>");
      Node n{detail::parse_number<NodeId>(tok[1], lineno, "node id"),
             detail::parse_number<int>(tok[2], lineno, "map id")};
      if (n.id < 0 || n.map_id < 0) throw ParseError(lineno, "negative node or map id");
      if (!node_lines.emplace(n.id, lineno).second) {
        throw ParseError(lineno, "duplicate node id " + std::to_string(n.id));
      }
      nodes.push_back(n);
    } else if (tok[0] == "EDGE") {
      if (tok.size() < 14) throw ParseError(lineno, "EDGE expects kind, id, src, dst and 9 rotation entries");
      Edge e;
      if (tok[1] == "EGO") {
        e.kind = EdgeKind::Ego;
      } else if (tok[1] == "LC") {
        e.kind = EdgeKind::LoopClosure;
      } else {
        throw ParseError(lineno, "unknown edge kind '" + std::string(tok[1]) + "'");
      }
      e.id = detail::parse_number<EdgeId>(tok[2], lineno, "edge id");
      e.src = detail::parse_number<NodeId>(tok[3], lineno, "src");
      e.dst = detail::parse_number<NodeId>(tok[4], lineno, "dst");
      so3::Matrix3 m;
      for (int k = 0; k < 9; ++k) {
        m(k / 3, k % 3) = detail::parse_number<double>(tok[5 + k], lineno, "rotation entry");
      }
      e.prior_inlier = e.kind == EdgeKind::Ego ? 1.0 : 0.5;
      for (std::size_t k = 14; k < tok.size(); k += 2) {
        if (k + 1 >= tok.size()) throw ParseError(lineno, "dangling token '" + std::string(tok[k]) + "'");
        if (tok[k] == "PRIOR") {
          e.prior_inlier = detail::parse_number<double>(tok[k + 1], lineno, "prior");
          if (!(e.prior_inlier >= 0.0 && e.prior_inlier <= 1.0)) throw ParseError(lineno, "prior outside [0,1]");
        } else if (tok[k] == "TRUTH") {
          if (tok[k + 1] == "IN") {
            e.truth = Truth::Inlier;
          } else if (tok[k + 1] == "OUT") {
            e.truth = Truth::Outlier;
          } else {
            throw ParseError(lineno, "TRUTH expects IN or OUT");
          }
        } else {
          throw ParseError(lineno, "unknown edge attribute '" + std::string(tok[k]) + "'");
        }
      }
      if (e.kind == EdgeKind::Ego && e.prior_inlier != 1.0) throw ParseError(lineno, "EGO edge must have prior 1");
      if (e.src == e.dst) throw ParseError(lineno, "self-loop on node " + std::to_string(e.src));
      if (!edge_id_lines.emplace(e.id, lineno).second) {
        throw ParseError(lineno, "duplicate edge id " + std::to_string(e.id));
      }
      e.rotation = detail::checked_rotation(m, lineno);
      edges.push_back(std::move(e));
      edge_lines.push_back(lineno);
    } else {
      throw ParseError(lineno, "unknown record '" + std::string(tok[0]) + "'");
    }
  }

  for (std::size_t i = 0; i < edges.size(); ++i) {
    for (NodeId end : {edges[i].src, edges[i].dst}) {
      if (!node_lines.count(end)) {
        throw ParseError(edge_lines[i], "edge " + std::to_string(edges[i].id) +
                                            " references unknown node " + std::to_string(end));
      }
    }
  }
  return PoseGraph(std::move(nodes), std::move(edges));
}

inline PoseGraph parse_graph_string(const std::string& text) {
  std::istringstream in(text);
  return parse_graph(in);
}

inline PoseGraph read_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_graph(in);
}

inline void write_graph(const PoseGraph& g, std::ostream& out) {
  out << "PGRAPH " << kGraphFormatVersion << '\n';
  for (const auto& n : g.nodes()) out << "NODE " << n.id << ' ' << n.map_id << '\n';
  for (const auto& e : g.edges()) {
    out << "EDGE " << (e.kind == EdgeKind::Ego ? "EGO" : "LC") << ' ' << e.id << ' ' << e.src << ' '
        << e.dst;
    for (int k = 0; k < 9; ++k) out << ' ' << detail::format_double(e.rotation(k / 3, k % 3));
    if (e.kind == EdgeKind::LoopClosure) out << " PRIOR " << detail::format_double(e.prior_inlier);
    if (e.truth) out << " TRUTH " << (*e.truth == Truth::Inlier ? "IN" : "OUT");
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_graph: stream failure");
}

inline std::string write_graph_string(const PoseGraph& g) {
  std::ostringstream out;
  write_graph(g, out);
  return out.str();
}

inline void write_graph_file(const PoseGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_graph(g, out);
}

/// Import shim for g2o files. Vertices go to map 0 and every edge becomes a
/// loop closure with prior 0.5; translations and information matrices are
/// ignored. Understands VERTEX_SE3:QUAT, EDGE_SE3:QUAT and the rotation-only
/// EDGE_SO3 <i> <j> <qx> <qy> <qz> <qw>.
inline PoseGraph parse_g2o(std::istream& in) {
  std::vector<Node> nodes;
  std::map<NodeId, bool> known;
  std::vector<Edge> edges;
  std::string raw;
  std::size_t lineno = 0;
  EdgeId next_edge = 0;

  auto ensure_node = [&](NodeId id) {
    if (known.emplace(id, true).second) nodes.push_back({id, 0});
  };

  while (std::getline(in, raw)) {
    ++lineno;
    const auto tok = detail::split_ws(raw);
    if (tok.empty() || tok[0].front() == '#') continue;
    std::size_t quat_at = 0;
    if (tok[0] == "VERTEX_SE3:QUAT") {
      if (tok.size() < 9) throw ParseError(lineno, "VERTEX_SE3:QUAT expects 8 values");
      ensure_node(detail::parse_number<NodeId>(tok[1], lineno, "vertex id"));
      continue;
    } else if (tok[0] == "EDGE_SE3:QUAT") {
      if (tok.size() < 10) throw ParseError(lineno, "EDGE_SE3:QUAT expects ids, translation, quaternion");
      quat_at = 6;
    } else if (tok[0] == "EDGE_SO3") {
      if (tok.size() < 7) throw ParseError(lineno, "EDGE_SO3 expects ids and quaternion");
      quat_at = 3;
    } else {
      continue;  // other g2o record types carry nothing we use
    }
    const NodeId a = detail::parse_number<NodeId>(tok[1], lineno, "vertex id");
    const NodeId b = detail::parse_number<NodeId>(tok[2], lineno, "vertex id");
    if (a == b) throw ParseError(lineno, "self-loop on node " + std::to_string(a));
    ensure_node(a);
    ensure_node(b);
    Eigen::Quaterniond q(detail::parse_number<double>(tok[quat_at + 3], lineno, "qw"),
                         detail::parse_number<double>(tok[quat_at], lineno, "qx"),
                         detail::parse_number<double>(tok[quat_at + 1], lineno, "qy"),
                         detail::parse_number<double>(tok[quat_at + 2], lineno, "qz"));
    if (q.norm() < 1e-9) throw ParseError(lineno, "zero quaternion");
    q.normalize();
    Edge e;
    e.id = next_edge++;
    e.src = a;
    e.dst = b;
    // g2o stores T_a^-1 T_b (b expressed in a); our convention maps src to dst.
    e.rotation = q.toRotationMatrix().transpose();
    e.kind = EdgeKind::LoopClosure;
    e.prior_inlier = 0.5;
    edges.push_back(std::move(e));
  }
  return PoseGraph(std::move(nodes), std::move(edges));
}

}  // namespace loopvet
