#pragma once

#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mclink/detectors.hpp"
#include "mclink/framing.hpp"
#include "mclink/universal.hpp"

namespace mclink {

/// The three receivers compared throughout: tuned thresholding, the MLP bit
/// detector, and the universal decoder.
struct NstDecoder {
  double eta = 0.5;
};

struct AnnDecoder {
  AnnDetector detector;
};

using AnyDecoder = std::variant<NstDecoder, AnnDecoder, UniversalModel>;

inline std::string decoder_name(const AnyDecoder& d) {
  if (std::holds_alternative<NstDecoder>(d)) return "nst";
  if (std::holds_alternative<AnnDecoder>(d)) return "ann";
  return "universal";
}

/// Decodes the payload windows of a trace whose origin is known.
inline std::vector<int> decode_payload(const Trace& trace, const LinkConfig& link,
                                       const AnyDecoder& decoder, long origin) {
  if (const auto* u = std::get_if<UniversalModel>(&decoder)) {
    DecodeResult res = decode_at(trace, link, *u, origin);
    return res.payload.bits;
  }

  std::vector<SymbolWindow> windows = segment(trace, link, origin);
  if (windows.size() < kPilot.size() + 1)
    throw std::invalid_argument("decode_payload: no payload windows after the pilot");
  std::vector<int> out;
  if (const auto* nst = std::get_if<NstDecoder>(&decoder)) {
    std::vector<SymbolWindow> pilot(windows.begin(), windows.begin() + 4);
    ThresholdState state = nst_calibrate(pilot, nst->eta);
    for (size_t i = kPilot.size(); i < windows.size(); ++i)
      out.push_back(nst_detect(windows[i], state));
    return out;
  }
  const auto& ann = std::get<AnnDecoder>(decoder);
  for (size_t i = kPilot.size(); i < windows.size(); ++i)
    out.push_back(ann_detect(windows[i], ann.detector) > 0.5 ? 1 : 0);
  return out;
}

}  // namespace mclink
