#include "runtime.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "verce/blob_store.hpp"

namespace verce::enactment::detail {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

constexpr auto kWaitSlice = 10ms;
constexpr int kPollMs = 20;

} // namespace

// ---- Topology ---------------------------------------------------------------

Topology::Topology(const dataflow::WorkflowGraph& g) : graph(g), order(dataflow::topologicalOrder(g)) {
  const auto& edges = g.edges();
  for (std::size_t i = 0; i < edges.size(); ++i) {
    outEdges[{edges[i].from.node, edges[i].from.port}].push_back(i);
    inEdges[edges[i].to.node].push_back(i);
  }
  for (const auto& [name, ports] : g.sourceFeeds()) {
    for (const auto& p : ports) feedBindings[p.node].emplace_back(name, p.port);
  }
}

const std::vector<std::size_t>& Topology::consumers(const std::string& node, const std::string& port) const {
  static const std::vector<std::size_t> none;
  auto it = outEdges.find({node, port});
  return it == outEdges.end() ? none : it->second;
}

// ---- NodeRunner -------------------------------------------------------------

NodeRunner::NodeRunner(std::string id, const dataflow::NodeSpec& spec, RunSink& sink, Router& router)
    : id_(std::move(id)), spec_(spec), sink_(sink), router_(router) {
  trackInputs_ = sink_.provenance() && !spec_.pe->outputPorts.empty();
}

void NodeRunner::instantiate() {
  if (pe_) return;
  try {
    pe_ = spec_.pe->factory(dataflow::withDefaults(spec_.pe->parameterSchema, spec_.params));
  } catch (const std::exception& e) {
    throw NodeFailure{id_, "PEFailure", std::string("construction failed: ") + e.what(), 0};
  }
  if (!pe_) throw NodeFailure{id_, "PEFailure", "factory returned no instance", 0};
}

void NodeRunner::emit(std::string_view port, dataflow::Payload payload, Json metadata, std::vector<std::string> derivedFrom) {
  if (!spec_.pe->hasOutput(port)) {
    throw Error("UnknownPort", std::string(spec_.pe->name) + " has no output port '" + std::string(port) + "'");
  }
  if (!metadata.is_object()) metadata = Json::object();
  buffer_.push_back({std::string(port), std::move(payload), std::move(metadata), std::move(derivedFrom)});
  if (!buffering_) {
    if (sink_.cancelled()) throw CancelledSignal{};
    release(stepStart_);
    stepStart_ = sink_.now();
  }
}

void NodeRunner::release(double stepStart) {
  if (buffer_.empty()) return;
  auto pending = std::move(buffer_);
  buffer_.clear();
  std::vector<std::string> ids;
  if (sink_.provenance()) {
    StepRecord step;
    auto& a = step.activity;
    a.peInstanceId = id_;
    a.peName = spec_.pe->name;
    a.peVersion = spec_.pe->version;
    a.parameters = spec_.params;
    a.startedAt = stepStart;
    a.endedAt = sink_.now();
    step.inputs = consumed_;
    for (const auto& e : pending) {
      provenance::OutputRecord o;
      o.port = e.port;
      o.payloadDigest = dataflow::payloadDigest(e.payload);
      o.metadata = e.metadata;
      if (!e.derivedFrom.empty()) o.derivedFrom = e.derivedFrom;
      o.payload = &e.payload;
      step.outputs.push_back(std::move(o));
    }
    ids = sink_.recordStep(std::move(step)).outputEntityIds;
  }
  consumed_.clear();
  for (std::size_t i = 0; i < pending.size(); ++i) {
    auto& e = pending[i];
    DataUnit u{std::move(e.payload), std::move(e.metadata), ids.empty() ? std::string() : ids[i], ++seqByPort_[e.port]};
    router_.route(id_, e.port, std::move(u));
  }
}

void NodeRunner::fail(const std::string& what, const std::string& code, std::uint64_t seq, double stepStart) {
  buffer_.clear();
  if (sink_.provenance()) {
    StepRecord step;
    auto& a = step.activity;
    a.peInstanceId = id_;
    a.peName = spec_.pe->name;
    a.peVersion = spec_.pe->version;
    a.parameters = spec_.params;
    a.startedAt = stepStart;
    a.endedAt = sink_.now();
    a.status = provenance::ActivityStatus::Error;
    a.errorMessage = what;
    step.inputs = consumed_;
    try {
      sink_.recordStep(std::move(step));
    } catch (const std::exception&) {
      // The failure itself is what gets reported.
    }
  }
  throw NodeFailure{id_, code, what, seq};
}

void NodeRunner::generatorStep(const char* phase, const std::function<void()>& body) {
  buffering_ = false;
  stepStart_ = sink_.now();
  try {
    body();
  } catch (const CancelledSignal&) {
    throw;
  } catch (const NodeFailure&) {
    throw;
  } catch (const Error& e) {
    fail(std::string(phase) + ": " + e.what(), e.code() == "SpillExhausted" ? e.code() : "PEFailure", 0, stepStart_);
  } catch (const std::exception& e) {
    fail(std::string(phase) + ": " + e.what(), "PEFailure", 0, stepStart_);
  }
}

void NodeRunner::start() {
  instantiate();
  generatorStep("start", [&] { pe_->start(*this); });
}

void NodeRunner::finish() {
  instantiate();
  generatorStep("finish", [&] { pe_->finish(*this); });
}

void NodeRunner::deliver(const std::string& port, DataUnit unit) {
  if (sink_.cancelled()) throw CancelledSignal{};
  instantiate();
  const auto seq = unit.seq;
  if (trackInputs_ && !unit.provId.empty()) consumed_.push_back(unit.provId);
  buffering_ = true;
  const double started = sink_.now();
  try {
    pe_->process(port, unit, *this);
  } catch (const CancelledSignal&) {
    throw;
  } catch (const NodeFailure&) {
    throw;
  } catch (const Error& e) {
    buffering_ = false;
    fail(e.what(), e.code() == "SpillExhausted" ? e.code() : "PEFailure", seq, started);
  } catch (const std::exception& e) {
    buffering_ = false;
    fail(e.what(), "PEFailure", seq, started);
  }
  buffering_ = false;
  sink_.unitProcessed(id_, port, seq);
  try {
    release(started);
  } catch (const Error& e) {
    if (e.code() != "SpillExhausted") throw;
    throw NodeFailure{id_, e.code(), e.what(), seq};
  }
}

// ---- SpillArea --------------------------------------------------------------

SpillArea::File::File(SpillArea& area, const std::string& name) : area_(area) {
  {
    std::lock_guard lock(area_.dirMu_);
    fs::create_directories(area_.dir_);
  }
  path_ = area_.dir_ / (name + ".spill");
  w_ = std::fopen(path_.c_str(), "wb");
  r_ = w_ ? std::fopen(path_.c_str(), "rb") : nullptr;
  if (!w_ || !r_) throw Error("SpillExhausted", "cannot create spill file " + path_.string());
  ++area_.files_;
}

SpillArea::File::~File() {
  if (w_) std::fclose(w_);
  if (r_) std::fclose(r_);
  std::error_code ec;
  fs::remove(path_, ec);
}

void SpillArea::File::push(const DataUnit& u) {
  dataflow::ByteWriter w;
  encodeUnit(w, u);
  const auto& bytes = w.bytes();
  const auto total = area_.used_.fetch_add(bytes.size() + 4) + bytes.size() + 4;
  if (total > area_.quota_) throw Error("SpillExhausted", "spill quota of " + std::to_string(area_.quota_) + " bytes used up");
  dataflow::ByteWriter len;
  len.u32(static_cast<std::uint32_t>(bytes.size()));
  if (std::fwrite(len.bytes().data(), 1, 4, w_) != 4 || std::fwrite(bytes.data(), 1, bytes.size(), w_) != bytes.size() ||
      std::fflush(w_) != 0) {
    throw Error("SpillExhausted", "write to " + path_.string() + " failed: " + std::strerror(errno));
  }
  ++count_;
}

DataUnit SpillArea::File::pop() {
  char lenBytes[4];
  std::clearerr(r_);
  if (std::fread(lenBytes, 1, 4, r_) != 4) throw Error("SpillCorrupt", "short read from " + path_.string());
  dataflow::ByteReader lr(std::string_view(lenBytes, 4));
  std::string bytes(lr.u32(), '\0');
  if (std::fread(bytes.data(), 1, bytes.size(), r_) != bytes.size()) throw Error("SpillCorrupt", "short read from " + path_.string());
  --count_;
  dataflow::ByteReader r(bytes);
  return dataflow::decodeUnit(r);
}

// ---- Inbox ------------------------------------------------------------------

Inbox::Inbox(std::string owner, std::vector<std::size_t> capacities, const std::atomic<bool>& cancel, SpillArea* spill)
    : owner_(std::move(owner)), cancel_(cancel), spillArea_(spill), slots_(capacities.size()) {
  for (std::size_t i = 0; i < capacities.size(); ++i) slots_[i].capacity = std::max<std::size_t>(1, capacities[i]);
}

void Inbox::push(std::size_t slot, DataUnit unit) {
  std::unique_lock lock(mu_);
  auto& s = slots_.at(slot);
  const auto spilled = [&] { return s.spill && s.spill->size() > 0; };
  while (s.queue.size() >= s.capacity || spilled()) {
    if (spillArea_) {
      if (!s.spill) {
        std::string name = owner_ + "-" + std::to_string(slot);
        for (auto& c : name)
          if (c == '/') c = '_';
        s.spill = std::make_unique<SpillArea::File>(*spillArea_, name);
      }
      s.spill->push(unit);
      return;
    }
    if (cancel_.load(std::memory_order_relaxed)) throw CancelledSignal{};
    notFull_.wait_for(lock, kWaitSlice);
  }
  s.queue.push_back(std::move(unit));
  notEmpty_.notify_one();
}

bool Inbox::pop(std::size_t& slot, DataUnit& unit) {
  std::unique_lock lock(mu_);
  for (;;) {
    if (cancel_.load(std::memory_order_relaxed)) throw CancelledSignal{};
    bool open = false;
    for (std::size_t k = 0; k < slots_.size(); ++k) {
      const auto i = (next_ + k) % slots_.size();
      auto& s = slots_[i];
      if (!s.queue.empty()) {
        unit = std::move(s.queue.front());
        s.queue.pop_front();
        while (s.spill && s.spill->size() > 0 && s.queue.size() < s.capacity) s.queue.push_back(s.spill->pop());
        slot = i;
        next_ = (i + 1) % slots_.size();
        notFull_.notify_all();
        return true;
      }
      open |= !s.closed;
    }
    if (!open) return false;
    notEmpty_.wait_for(lock, kWaitSlice);
  }
}

void Inbox::close(std::size_t slot) {
  std::lock_guard lock(mu_);
  slots_.at(slot).closed = true;
  notEmpty_.notify_all();
}

// ---- Frames -----------------------------------------------------------------

namespace {

void waitFor(int fd, short events, const std::atomic<bool>* cancel) {
  for (;;) {
    if (cancel && cancel->load(std::memory_order_relaxed)) throw CancelledSignal{};
    pollfd p{fd, events, 0};
    const int r = ::poll(&p, 1, kPollMs);
    if (r > 0) return;
    if (r < 0 && errno != EINTR) throw Error("TransportError", std::string("poll: ") + std::strerror(errno));
  }
}

bool writeAll(int fd, const char* data, std::size_t n, const std::atomic<bool>* cancel) {
  while (n > 0) {
    waitFor(fd, POLLOUT, cancel);
    const auto w = ::send(fd, data, n, MSG_NOSIGNAL | MSG_DONTWAIT);
    if (w < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) return false;
      throw Error("TransportError", std::string("send: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

/// 0 on EOF before any byte, n on success; throws on EOF mid-frame.
std::size_t readAll(int fd, char* data, std::size_t n, const std::atomic<bool>* cancel) {
  std::size_t got = 0;
  while (got < n) {
    waitFor(fd, POLLIN, cancel);
    const auto r = ::recv(fd, data + got, n - got, MSG_DONTWAIT);
    if (r < 0) {
      if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) continue;
      if (errno != ECONNRESET) throw Error("TransportError", std::string("recv: ") + std::strerror(errno));
    }
    if (r <= 0) {
      if (got == 0) return 0;
      throw Error("MalformedFrame", "connection closed mid-frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return got;
}

} // namespace

bool writeFrame(int fd, std::string_view bytes, const std::atomic<bool>* cancel) {
  dataflow::ByteWriter len;
  len.u32(static_cast<std::uint32_t>(bytes.size()));
  return writeAll(fd, len.bytes().data(), 4, cancel) && writeAll(fd, bytes.data(), bytes.size(), cancel);
}

std::optional<std::string> readFrame(int fd, const std::atomic<bool>* cancel) {
  char lenBytes[4];
  if (readAll(fd, lenBytes, 4, cancel) == 0) return std::nullopt;
  dataflow::ByteReader lr(std::string_view(lenBytes, 4));
  std::string body(lr.u32(), '\0');
  if (!body.empty() && readAll(fd, body.data(), body.size(), cancel) == 0) {
    throw Error("MalformedFrame", "connection closed mid-frame");
  }
  return body;
}

void writeTransported(dataflow::ByteWriter& w, const DataUnit& u, const fs::path& blobDir) {
  const auto* a = std::get_if<dataflow::Array>(&u.payload);
  if (a && a->size() * sizeof(double) > dataflow::kInlineArrayLimitBytes) {
    BlobStore blobs(blobDir);
    DataUnit ref{blobs.externalize(u.payload), u.metadata, u.provId, u.seq};
    w.u8(1);
    encodeUnit(w, ref);
    return;
  }
  w.u8(0);
  encodeUnit(w, u);
}

std::string encodeTransported(const DataUnit& u, const fs::path& blobDir) {
  dataflow::ByteWriter w;
  writeTransported(w, u, blobDir);
  return w.take();
}

DataUnit decodeTransported(dataflow::ByteReader& r, const fs::path& blobDir) {
  const bool external = r.u8() != 0;
  auto u = dataflow::decodeUnit(r);
  if (external) u.payload = BlobStore(blobDir).internalize(std::move(u.payload));
  return u;
}

} // namespace verce::enactment::detail
