#include "egohand/events.hpp"

#include <algorithm>
#include <charconv>
#include <string>

#include "binary_io.hpp"

namespace egohand {

void EventStream::push_back(const Event& e) {
  if (e.x >= width_ || e.y >= height_) {
    throw Error(ErrorCode::OutOfBoundsPixel,
                "event (" + std::to_string(e.x) + "," + std::to_string(e.y) + ") outside " +
                    std::to_string(width_) + "x" + std::to_string(height_),
                t_.size());
  }
  if (e.polarity != Polarity::Negative && e.polarity != Polarity::Positive) {
    throw Error(ErrorCode::InvalidRecord, "polarity must be -1 or +1", t_.size());
  }
  if (!t_.empty() && e.t < t_.back()) {
    throw Error(ErrorCode::NonMonotonicTimestamp,
                "t=" + std::to_string(e.t) + " after t=" + std::to_string(t_.back()), t_.size());
  }
  t_.push_back(e.t);
  x_.push_back(e.x);
  y_.push_back(e.y);
  p_.push_back(static_cast<std::int8_t>(e.polarity));
}

void EventStream::reserve(std::size_t n) {
  t_.reserve(n);
  x_.reserve(n);
  y_.reserve(n);
  p_.reserve(n);
}

namespace {

EventStream parse_binary(std::span<const std::uint8_t> bytes, std::optional<SensorSize> sensor) {
  io::ByteReader in(bytes);
  if (!in.magic("EVS1")) throw Error(ErrorCode::MalformedHeader, "missing EVS1 magic");
  if (!in.has(12)) throw Error(ErrorCode::MalformedHeader, "header shorter than 16 bytes");
  const auto width = in.le<std::uint16_t>();
  const auto height = in.le<std::uint16_t>();
  const auto count = in.le<std::uint64_t>();
  if (sensor && (sensor->width != width || sensor->height != height)) {
    throw Error(ErrorCode::DimensionMismatch, "file sensor size differs from the requested one");
  }
  const std::size_t available = in.remaining() / kBinaryV1RecordSize;
  if (available < count) {
    throw Error(ErrorCode::TruncatedRecord,
                "header declares " + std::to_string(count) + " records, found " + std::to_string(available),
                available);
  }
  if (in.remaining() != count * kBinaryV1RecordSize) {
    throw Error(ErrorCode::MalformedHeader, "trailing bytes after last record");
  }

  EventStream stream(width, height);
  stream.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Event e;
    e.t = in.le<std::uint64_t>();
    e.x = in.le<std::uint16_t>();
    e.y = in.le<std::uint16_t>();
    const auto p = in.le<std::int8_t>();
    if (p != -1 && p != 1) throw Error(ErrorCode::InvalidRecord, "polarity must be -1 or +1", i);
    e.polarity = static_cast<Polarity>(p);
    stream.push_back(e);
  }
  return stream;
}

template <typename T>
bool parse_field(std::string_view text, T& out) {
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

EventStream parse_csv(std::span<const std::uint8_t> bytes, std::optional<SensorSize> sensor) {
  if (!sensor) throw Error(ErrorCode::InvalidArgument, "CSV events need an explicit sensor size");
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());

  std::size_t pos = 0;
  auto next_line = [&](std::string_view& line) {
    if (pos >= text.size()) return false;
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = end + 1;
    return true;
  };

  std::string_view line;
  if (!next_line(line) || line != "t_us,x,y,p") {
    throw Error(ErrorCode::MalformedHeader, "expected header line \"t_us,x,y,p\"");
  }
  EventStream stream(sensor->width, sensor->height);
  std::size_t index = 0;
  while (next_line(line)) {
    if (line.empty()) continue;
    std::string_view fields[4];
    std::size_t n = 0;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      if (n == 4) {
        n = 5;
        break;
      }
      fields[n++] = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (n != 4) throw Error(ErrorCode::TruncatedRecord, "expected 4 fields", index);
    Event e;
    int p = 0;
    if (!parse_field(fields[0], e.t) || !parse_field(fields[1], e.x) || !parse_field(fields[2], e.y) ||
        !parse_field(fields[3], p)) {
      throw Error(ErrorCode::InvalidRecord, "unparseable field", index);
    }
    if (p != -1 && p != 1) throw Error(ErrorCode::InvalidRecord, "polarity must be -1 or +1", index);
    e.polarity = static_cast<Polarity>(p);
    stream.push_back(e);
    ++index;
  }
  return stream;
}

}  // namespace

EventStream parse_events(std::span<const std::uint8_t> bytes, EventFormat format,
                         std::optional<SensorSize> sensor) {
  return format == EventFormat::BinaryV1 ? parse_binary(bytes, sensor) : parse_csv(bytes, sensor);
}

std::vector<std::uint8_t> write_events(const EventStream& stream, EventFormat format) {
  std::vector<std::uint8_t> out;
  const auto t = stream.timestamps();
  const auto x = stream.xs();
  const auto y = stream.ys();
  const auto p = stream.polarities();
  if (format == EventFormat::BinaryV1) {
    out.reserve(kBinaryV1HeaderSize + stream.size() * kBinaryV1RecordSize);
    io::ByteWriter w(out);
    w.bytes("EVS1", 4);
    w.le<std::uint16_t>(stream.width());
    w.le<std::uint16_t>(stream.height());
    w.le<std::uint64_t>(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) {
      w.le(t[i]);
      w.le(x[i]);
      w.le(y[i]);
      w.le(p[i]);
    }
    return out;
  }
  std::string text = "t_us,x,y,p\n";
  text.reserve(text.size() + stream.size() * 24);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    text += std::to_string(t[i]);
    text += ',';
    text += std::to_string(x[i]);
    text += ',';
    text += std::to_string(y[i]);
    text += ',';
    text += std::to_string(static_cast<int>(p[i]));
    text += '\n';
  }
  out.assign(text.begin(), text.end());
  return out;
}

EventFormat event_format_from_path(std::string_view path) {
  return path.ends_with(".csv") ? EventFormat::Csv : EventFormat::BinaryV1;
}

EventStream read_event_file(const std::string& path, EventFormat format, std::optional<SensorSize> sensor) {
  const auto bytes = io::read_file(path);
  return parse_events(bytes, format, sensor);
}

void write_event_file(const std::string& path, const EventStream& stream, EventFormat format) {
  io::write_file(path, write_events(stream, format));
}

EventWindow window_slice(const EventStream& stream, Microseconds t_end, Microseconds delta_t) {
  if (delta_t == 0 || delta_t > kMaxDeltaT) {
    throw Error(ErrorCode::InvalidArgument, "delta_t must lie in (0, 2^32] us");
  }
  const auto ts = stream.timestamps();
  // (t_end - delta_t, t_end]; an underflowing lower bound admits everything from t = 0.
  const auto first = t_end >= delta_t
                         ? std::upper_bound(ts.begin(), ts.end(), t_end - delta_t)
                         : ts.begin();
  const auto last = std::upper_bound(first, ts.end(), t_end);
  const auto begin = static_cast<std::size_t>(first - ts.begin());
  const auto count = static_cast<std::size_t>(last - first);

  EventWindow w;
  w.t_end = t_end;
  w.delta_t = delta_t;
  w.sensor_width = stream.width();
  w.sensor_height = stream.height();
  w.t = ts.subspan(begin, count);
  w.x = stream.xs().subspan(begin, count);
  w.y = stream.ys().subspan(begin, count);
  w.polarity = stream.polarities().subspan(begin, count);
  return w;
}

}  // namespace egohand
