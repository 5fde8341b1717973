#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fluxtft/core/error.hpp"
#include "fluxtft/core/text.hpp"
#include "fluxtft/core/time.hpp"
#include "fluxtft/tft/model.hpp"

namespace fluxtft {

/// Encoder-side interpretability for one window.
struct InterpretationSnapshot {
  std::string site_id;
  Timestamp origin = 0;
  std::size_t decoder_positions = 0;
  std::vector<double> attention;   // k, sums to 1; index i is relative position i - k
  std::vector<double> importance;  // k x m_enc, rows sum to 1

  std::size_t encoder_length() const { return attention.size(); }
  std::size_t n_features() const { return attention.empty() ? 0 : importance.size() / attention.size(); }
  double weight(std::size_t pos, std::size_t feature) const { return importance[pos * n_features() + feature]; }
};

namespace tft {

/// Head-averaged attention of the first decoder position restricted to the
/// encoder positions and renormalized; encoder selection weights as is.
inline InterpretationSnapshot capture_interpretation(const TftOutput& out, const Window& w) {
  const std::size_t k = static_cast<std::size_t>(w.encoder_length);
  InterpretationSnapshot s;
  s.site_id = w.site_id;
  s.origin = w.origin;
  s.decoder_positions = out.decoder_length;
  s.attention.assign(k, 0.0);
  for (std::size_t h = 0; h < out.heads; ++h) {
    for (std::size_t j = 0; j < k; ++j) s.attention[j] += out.attn(h, 0, j);
  }
  double total = 0.0;
  for (double a : s.attention) total += a;
  if (total > 0) {
    for (double& a : s.attention) a /= total;
  } else {
    for (double& a : s.attention) a = 1.0 / static_cast<double>(k);
  }
  s.importance = out.encoder_weights;
  return s;
}

inline std::vector<InterpretationSnapshot> capture_interpretation(const std::vector<TftOutput>& outputs,
                                                                  const std::vector<Window>& windows) {
  if (outputs.size() != windows.size()) throw UsageError("capture_interpretation: outputs and windows differ in count");
  std::vector<InterpretationSnapshot> out;
  out.reserve(outputs.size());
  for (std::size_t i = 0; i < outputs.size(); ++i) out.push_back(capture_interpretation(outputs[i], windows[i]));
  return out;
}

}  // namespace tft

/// Long CSV: site_id,origin,encoder_index,attention,<feature weights...>
/// with encoder_index running from -k to -1.
inline std::string snapshots_to_csv(const std::vector<InterpretationSnapshot>& snaps,
                                    const std::vector<std::string>& features) {
  std::ostringstream os;
  os << "site_id,origin,encoder_index,attention";
  for (const auto& f : features) os << ',' << f;
  os << '\n';
  for (const auto& s : snaps) {
    if (s.n_features() != features.size()) throw UsageError("snapshot CSV: feature count mismatch for " + s.site_id);
    const std::size_t k = s.encoder_length();
    for (std::size_t i = 0; i < k; ++i) {
      os << s.site_id << ',' << format_timestamp(s.origin) << ',' << (static_cast<long long>(i) - static_cast<long long>(k))
         << ',' << text::format_double(s.attention[i]);
      for (std::size_t f = 0; f < features.size(); ++f) os << ',' << text::format_double(s.weight(i, f));
      os << '\n';
    }
  }
  return os.str();
}

/// Parses the CSV written by snapshots_to_csv. Rows of one snapshot must be
/// consecutive; feature names are returned through `features`.
inline std::vector<InterpretationSnapshot> snapshots_from_csv(const std::string& content,
                                                              std::vector<std::string>& features) {
  std::istringstream in(content);
  std::string line;
  if (!std::getline(in, line)) throw DataError("snapshot CSV: empty input");
  auto header = text::split_csv(text::trim(line));
  if (header.size() < 4 || header[0] != "site_id" || header[1] != "origin" || header[2] != "encoder_index" ||
      header[3] != "attention") {
    throw DataError("snapshot CSV: unexpected header");
  }
  features.assign(header.begin() + 4, header.end());
  std::vector<InterpretationSnapshot> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = text::trim(line);
    if (line.empty()) continue;
    auto f = text::split_csv(line);
    if (f.size() != header.size()) throw DataError("snapshot CSV line " + std::to_string(lineno) + ": wrong field count");
    const auto origin = parse_timestamp(f[1]);
    if (!origin) throw DataError("snapshot CSV line " + std::to_string(lineno) + ": bad timestamp");
    if (out.empty() || out.back().site_id != f[0] || out.back().origin != *origin) {
      InterpretationSnapshot snap;
      snap.site_id = f[0];
      snap.origin = *origin;
      snap.decoder_positions = 1;
      out.push_back(std::move(snap));
    }
    auto& s = out.back();
    for (std::size_t c = 3; c < f.size(); ++c) {
      const auto v = text::parse_double(f[c]);
      if (!v) throw DataError("snapshot CSV line " + std::to_string(lineno) + ": bad number");
      (c == 3 ? s.attention : s.importance).push_back(*v);
    }
  }
  return out;
}

}  // namespace fluxtft
