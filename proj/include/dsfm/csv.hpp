#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dsfm/schema.hpp"

namespace dsfm {

namespace detail {

// RFC-4180-ish: commas separate, double quotes group, "" escapes a quote.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && ptr == e && std::isfinite(out);
}

inline std::vector<std::string> split_tokens(const std::string& cell) {
  std::vector<std::string> toks;
  if (cell.empty()) return toks;
  std::size_t start = 0;
  while (true) {
    const auto bar = cell.find('|', start);
    toks.push_back(cell.substr(start, bar - start));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return toks;
}

inline std::uint32_t encode_category(const FeatureSpec& f, const std::unordered_map<std::string, std::uint32_t>& lut,
                                     const std::string& tok) {
  const auto it = lut.find(tok);
  return it == lut.end() ? static_cast<std::uint32_t>(f.oov_index()) : it->second;
}

}  // namespace detail

/// Parses CSV text into an encoded dataset. Numerical features without bin
/// edges get equal-frequency edges fitted on this file; the returned schema
/// carries them so other splits can be loaded consistently.
inline MultiDomainDataset parse_csv(std::istream& in, FeatureSchema schema, Split split = Split::Train) {
  schema.validate();
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("CSV input is empty (missing header row)");
  const auto header = detail::split_csv_line(line);
  auto column = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw SchemaError("CSV is missing column '" + name + "'");
  };
  const std::size_t dom_col = column(schema.domain_field);
  const std::size_t lab_col = column(schema.label_field);
  const std::size_t m = schema.size();
  std::vector<std::size_t> cols(m);
  for (std::size_t j = 0; j < m; ++j) cols[j] = column(schema[j].name);

  std::vector<std::unordered_map<std::string, std::uint32_t>> luts(m);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t v = 0; v < schema[j].vocab.size(); ++v) luts[j][schema[j].vocab[v]] = static_cast<std::uint32_t>(v);

  MultiDomainDataset ds;
  ds.split = split;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    Sample s;
    try {
      s.domain = schema.encode_domain(cells[dom_col]);
    } catch (const ValueError& e) {
      throw ValueError("row " + std::to_string(row) + ": " + e.what());
    }
    const auto& lab = cells[lab_col];
    if (lab == "0") s.label = 0;
    else if (lab == "1") s.label = 1;
    else throw ValueError("row " + std::to_string(row) + ": label '" + lab + "' is not in {0,1}");
    s.values.assign(m, 0);
    s.raw.assign(m, 0.0);
    s.seqs.assign(m, {});
    for (std::size_t j = 0; j < m; ++j) {
      const auto& f = schema[j];
      const auto& cell = cells[cols[j]];
      if (f.sequential()) {
        for (const auto& tok : detail::split_tokens(cell)) {
          if (s.seqs[j].size() >= f.max_seq_len) break;
          s.seqs[j].push_back(detail::encode_category(f, luts[j], tok));
        }
      } else if (f.categorical()) {
        s.values[j] = detail::encode_category(f, luts[j], cell);
      } else {
        double v = 0.0;
        if (!detail::parse_double(cell, v))
          throw ParseError("row " + std::to_string(row) + ": non-numeric value '" + cell + "' in column '" + f.name + "'");
        s.raw[j] = v;
      }
    }
    ds.samples.push_back(std::move(s));
  }

  for (std::size_t j = 0; j < m; ++j) {
    auto& f = schema.features[j];
    if (f.categorical() || f.sequential()) continue;
    if (!f.has_edges()) {
      std::vector<double> col;
      col.reserve(ds.samples.size());
      for (const auto& s : ds.samples) col.push_back(s.raw[j]);
      f.bin_edges = equal_frequency_edges(std::move(col), f.num_bins);
      f.num_bins = f.bin_edges.size() - 1;
    }
    for (auto& s : ds.samples) s.values[j] = static_cast<std::uint32_t>(f.bin_of(s.raw[j]));
  }
  ds.schema = std::move(schema);
  ds.validate();
  return ds;
}

inline MultiDomainDataset load_csv(const std::string& path, const FeatureSchema& schema, Split split = Split::Train) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  return parse_csv(in, schema, split);
}

/// Writes the encoded dataset back to CSV. OOV indices are written as the
/// reserved "<OOV>" token, which re-encodes to OOV on load.
inline void write_csv(std::ostream& out, const MultiDomainDataset& ds) {
  const auto& schema = ds.schema;
  out << detail::csv_escape(schema.domain_field) << ',' << detail::csv_escape(schema.label_field);
  for (const auto& f : schema.features) out << ',' << detail::csv_escape(f.name);
  out << '\n';
  auto token = [](const FeatureSpec& f, std::uint32_t v) -> std::string {
    return v < f.vocab.size() ? f.vocab[v] : std::string(kOovToken);
  };
  std::ostringstream num;
  num.precision(17);
  for (const auto& s : ds.samples) {
    out << detail::csv_escape(schema.domain_label(s.domain)) << ',' << s.label;
    for (std::size_t j = 0; j < schema.size(); ++j) {
      const auto& f = schema[j];
      out << ',';
      if (f.sequential()) {
        std::string cell;
        for (std::size_t t = 0; t < s.seqs[j].size(); ++t) {
          if (t) cell.push_back('|');
          cell += token(f, s.seqs[j][t]);
        }
        out << detail::csv_escape(cell);
      } else if (f.categorical()) {
        out << detail::csv_escape(token(f, s.values[j]));
      } else {
        num.str("");
        num << s.raw[j];
        out << num.str();
      }
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const MultiDomainDataset& ds) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write CSV file '" + path + "'");
  write_csv(out, ds);
}

}  // namespace dsfm
