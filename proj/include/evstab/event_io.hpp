#pragma once

// Event stream persistence.
//
// Binary layout, little-endian:
//   header  "EVST" | version u32 | width u16 | height u16 | reserved u32   (16 bytes)
//   record  t u64 (us since t0) | x u16 | y_and_p u16                      (12 bytes)
// where bit 15 of y_and_p is the polarity (1 = positive) and bits 0-14 hold y.
// The header carries no t0, so a stream read back starts at t0 = 0.

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

#include "evstab/evsim.hpp"

namespace evstab {

inline constexpr std::uint32_t kEventFileVersion = 1;
inline constexpr std::size_t kEventHeaderBytes = 16;
inline constexpr std::size_t kEventRecordBytes = 12;

namespace detail {

template <class T>
void put_le(unsigned char* dst, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xff);
}

template <class T>
T get_le(const unsigned char* src) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) value |= static_cast<T>(static_cast<T>(src[i]) << (8 * i));
  return value;
}

}  // namespace detail

inline void write_events_binary(std::ostream& os, const EventStream& stream) {
  std::array<unsigned char, kEventHeaderBytes> header{};
  std::memcpy(header.data(), "EVST", 4);
  detail::put_le<std::uint32_t>(header.data() + 4, kEventFileVersion);
  detail::put_le<std::uint16_t>(header.data() + 8, static_cast<std::uint16_t>(stream.geom.width));
  detail::put_le<std::uint16_t>(header.data() + 10, static_cast<std::uint16_t>(stream.geom.height));
  detail::put_le<std::uint32_t>(header.data() + 12, 0);
  os.write(reinterpret_cast<const char*>(header.data()), header.size());

  std::array<unsigned char, kEventRecordBytes> rec{};
  for (const Event& e : stream.events) {
    if (e.t_us < stream.t0_us) throw IoError("event precedes stream start");
    if (e.y > 0x7fff) throw IoError("event row does not fit in 15 bits");
    detail::put_le<std::uint64_t>(rec.data(), static_cast<std::uint64_t>(e.t_us - stream.t0_us));
    detail::put_le<std::uint16_t>(rec.data() + 8, e.x);
    const auto yp = static_cast<std::uint16_t>(e.y | (e.p > 0 ? 0x8000u : 0u));
    detail::put_le<std::uint16_t>(rec.data() + 10, yp);
    os.write(reinterpret_cast<const char*>(rec.data()), rec.size());
  }
  if (!os) throw IoError("failed writing event stream");
}

/// Reads a binary stream. Geometry takes width/height from the header and
/// the default field of view unless `fov` supplies one.
inline EventStream read_events_binary(std::istream& is, const SensorGeometry* fov = nullptr) {
  std::array<unsigned char, kEventHeaderBytes> header{};
  if (!is.read(reinterpret_cast<char*>(header.data()), header.size()))
    throw IoError("truncated event file header");
  if (std::memcmp(header.data(), "EVST", 4) != 0) throw IoError("bad event file magic");
  if (detail::get_le<std::uint32_t>(header.data() + 4) != kEventFileVersion)
    throw IoError("unsupported event file version");

  EventStream stream;
  if (fov) stream.geom = *fov;
  stream.geom.width = detail::get_le<std::uint16_t>(header.data() + 8);
  stream.geom.height = detail::get_le<std::uint16_t>(header.data() + 10);
  stream.t0_us = 0;

  std::array<unsigned char, kEventRecordBytes> rec{};
  std::int64_t last = 0;
  while (is.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
    Event e;
    e.t_us = static_cast<std::int64_t>(detail::get_le<std::uint64_t>(rec.data()));
    e.x = detail::get_le<std::uint16_t>(rec.data() + 8);
    const auto yp = detail::get_le<std::uint16_t>(rec.data() + 10);
    e.y = static_cast<std::uint16_t>(yp & 0x7fff);
    e.p = (yp & 0x8000) ? std::int8_t{1} : std::int8_t{-1};
    if (e.t_us < last) throw IoError("event timestamps are not ordered");
    if (e.x >= stream.geom.width || e.y >= stream.geom.height) throw IoError("event outside sensor bounds");
    last = e.t_us;
    stream.events.push_back(e);
  }
  if (is.gcount() != 0) throw IoError("truncated event record");
  stream.t1_us = stream.events.empty() ? 0 : stream.events.back().t_us + 1;
  return stream;
}

inline void write_events_csv(std::ostream& os, const EventStream& stream) {
  os << "t_us,x,y,p\n";
  for (const Event& e : stream.events)
    os << (e.t_us - stream.t0_us) << ',' << e.x << ',' << e.y << ',' << static_cast<int>(e.p) << '\n';
}

}  // namespace evstab
