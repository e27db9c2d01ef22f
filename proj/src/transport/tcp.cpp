#include "dahl/tcp.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace dahl {

namespace {

struct AddrInfo {
  addrinfo* head = nullptr;
  ~AddrInfo() {
    if (head) freeaddrinfo(head);
  }
};

std::string errno_text() { return std::strerror(errno); }

bool write_all(int fd, const std::string& data) {
  std::size_t off = 0;
  while (off < data.size()) {
    ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

void resolve(const HostPort& hp, bool passive, AddrInfo& out) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  std::string port = std::to_string(hp.port);
  int rc = getaddrinfo(hp.host.empty() ? nullptr : hp.host.c_str(), port.c_str(), &hints, &out.head);
  if (rc != 0) throw std::invalid_argument("cannot resolve " + hp.host + ": " + gai_strerror(rc));
}

}  // namespace

HostPort parse_host_port(std::string_view address) {
  auto colon = address.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == address.size())
    throw std::invalid_argument("address must be host:port: " + std::string(address));
  HostPort hp;
  hp.host = std::string(address.substr(0, colon));
  if (hp.host.size() >= 2 && hp.host.front() == '[' && hp.host.back() == ']') hp.host = hp.host.substr(1, hp.host.size() - 2);
  unsigned long port = 0;
  for (char c : address.substr(colon + 1)) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad port in " + std::string(address));
    port = port * 10 + static_cast<unsigned long>(c - '0');
    if (port > 65535) throw std::invalid_argument("bad port in " + std::string(address));
  }
  hp.port = static_cast<std::uint16_t>(port);
  return hp;
}

// --- TcpTransport ---

TcpTransport::TcpTransport(const std::string& bind_address, std::size_t max_connections)
    : max_connections_(max_connections == 0 ? 1 : max_connections) {
  HostPort hp;
  AddrInfo ai;
  try {
    hp = parse_host_port(bind_address);
    resolve(hp, true, ai);
  } catch (const std::invalid_argument& e) {
    throw BindError(e.what());
  }
  std::string last = "no usable address";
  for (addrinfo* p = ai.head; p; p = p->ai_next) {
    int fd = ::socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
    if (fd < 0) {
      last = errno_text();
      continue;
    }
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, p->ai_addr, p->ai_addrlen) == 0 && ::listen(fd, 512) == 0) {
      listen_fd_ = fd;
      break;
    }
    last = errno_text();
    ::close(fd);
  }
  if (listen_fd_ < 0) throw BindError("cannot bind " + bind_address + ": " + last);

  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  std::uint16_t port = ss.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port)
                                                : ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
  std::string host = hp.host.find(':') != std::string::npos ? "[" + hp.host + "]" : hp.host;
  address_ = host + ":" + std::to_string(port);
}

TcpTransport::~TcpTransport() {
  stop();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void TcpTransport::start(Handler on_envelope) {
  if (running_.exchange(true)) return;
  handler_ = std::move(on_envelope);
  acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpTransport::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> readers;
  {
    std::lock_guard lk(readers_mu_);
    for (int fd : reader_fds_) ::shutdown(fd, SHUT_RDWR);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  std::lock_guard lk(out_mu_);
  out_.clear();
  lru_.clear();
}

void TcpTransport::accept_loop() {
  while (running_) {
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      if (!running_) break;
      if (errno == EMFILE || errno == ENFILE) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      break;
    }
    {
      std::lock_guard lk(stats_mu_);
      ++stats_.inbound_connections;
    }
    std::lock_guard lk(readers_mu_);
    if (!running_) {
      ::close(fd);
      break;
    }
    reader_fds_.push_back(fd);
    readers_.emplace_back([this, fd] { read_loop(fd); });
  }
}

void TcpTransport::read_loop(int fd) {
  FrameDecoder decoder;
  char buf[64 * 1024];
  bool bad = false;
  for (;;) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) break;
    decoder.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    try {
      while (auto env = decoder.next()) {
        {
          std::lock_guard lk(stats_mu_);
          ++stats_.frames_in;
        }
        if (handler_) handler_(std::move(*env));
      }
    } catch (const FrameError&) {
      bad = true;
      break;
    }
  }
  if (bad || decoder.has_partial()) {
    std::lock_guard lk(stats_mu_);
    ++stats_.decode_errors;
  }
  std::lock_guard lk(readers_mu_);
  std::erase(reader_fds_, fd);
  ::close(fd);
}

std::shared_ptr<TcpTransport::Outbound> TcpTransport::connection(const std::string& to, bool fresh) {
  {
    std::lock_guard lk(out_mu_);
    auto it = out_.find(to);
    if (it != out_.end() && !fresh) {
      lru_.splice(lru_.begin(), lru_, it->second->lru);
      return it->second;
    }
  }
  HostPort hp = parse_host_port(to);
  AddrInfo ai;
  resolve(hp, false, ai);
  int fd = -1;
  for (addrinfo* p = ai.head; p; p = p->ai_next) {
    fd = ::socket(p->ai_family, p->ai_socktype | SOCK_CLOEXEC, p->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  if (fd < 0) return nullptr;
  int one = 1;
  setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);

  auto conn = std::shared_ptr<Outbound>(new Outbound, [](Outbound* o) {
    if (o->fd >= 0) ::close(o->fd);
    delete o;
  });
  conn->fd = fd;
  {
    std::lock_guard lk(stats_mu_);
    ++stats_.connects;
  }
  std::lock_guard lk(out_mu_);
  if (auto it = out_.find(to); it != out_.end()) {
    lru_.erase(it->second->lru);
    out_.erase(it);
  }
  while (out_.size() >= max_connections_ && !lru_.empty()) {
    out_.erase(lru_.back());  // oldest idle
    lru_.pop_back();
  }
  lru_.push_front(to);
  conn->lru = lru_.begin();
  out_[to] = conn;
  return conn;
}

void TcpTransport::evict(const std::string& to, const std::shared_ptr<Outbound>& conn) {
  std::lock_guard lk(out_mu_);
  auto it = out_.find(to);
  if (it == out_.end() || it->second != conn) return;
  lru_.erase(conn->lru);
  out_.erase(it);
}

SendStatus TcpTransport::send(const std::string& to, const Envelope& env) {
  std::string frame;
  try {
    frame = encode_frame(env);
  } catch (const FrameError&) {
    std::lock_guard lk(stats_mu_);
    ++stats_.send_failures;
    return SendStatus::kLinkError;
  }
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::shared_ptr<Outbound> conn;
    try {
      conn = connection(to, attempt > 0);
    } catch (const std::invalid_argument&) {
      break;
    }
    if (!conn) break;
    bool ok;
    {
      std::lock_guard lk(conn->write);
      ok = write_all(conn->fd, frame);
    }
    if (ok) {
      std::lock_guard lk(stats_mu_);
      ++stats_.frames_out;
      return SendStatus::kAccepted;
    }
    evict(to, conn);
    if (attempt == 0) {
      std::lock_guard lk(stats_mu_);
      ++stats_.reconnects;
    }
  }
  std::lock_guard lk(stats_mu_);
  ++stats_.send_failures;
  return SendStatus::kLinkError;
}

std::size_t TcpTransport::outbound_connections() const {
  std::lock_guard lk(out_mu_);
  return out_.size();
}

TcpStats TcpTransport::stats() const {
  std::lock_guard lk(stats_mu_);
  return stats_;
}

// --- TcpNode ---

namespace {

NodeConfig with_address(NodeConfig cfg, const std::string& address) {
  cfg.address = address;
  return cfg;
}

}  // namespace

TcpNode::TcpNode(NodeConfig cfg) : transport_(cfg.address) {
  node_ = std::make_unique<Node>(with_address(std::move(cfg), transport_.address()), *this);
}

TcpNode::~TcpNode() { stop(); }

void TcpNode::start() {
  if (thread_.joinable()) return;
  transport_.start([this](Envelope env) {
    env.origin = Origin::kNetwork;
    enqueue(std::move(env));
  });
  thread_ = std::thread([this] { loop(); });
}

void TcpNode::stop() {
  {
    std::lock_guard lk(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  transport_.stop();
  {
    std::lock_guard lk(mu_);
    stopped_ = true;
  }
  cv_.notify_all();
}

void TcpNode::wait() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [this] { return stopped_ || stopping_; });
}

NodeMetrics TcpNode::metrics() const {
  std::lock_guard lk(mu_);
  return metrics_;
}

SendStatus TcpNode::send(const std::string& to, Envelope env) { return transport_.send(to, env); }

std::int64_t TcpNode::now_ms() const {
  return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - epoch_).count();
}

void TcpNode::schedule_alarm(std::int64_t delay_ms, Envelope env) {
  {
    std::lock_guard lk(mu_);
    alarms_.push(Alarm{Clock::now() + std::chrono::milliseconds(delay_ms), alarm_seq_++, std::move(env)});
  }
  cv_.notify_all();
}

void TcpNode::enqueue(Envelope env) {
  {
    std::lock_guard lk(mu_);
    inbox_.push(std::move(env));
  }
  cv_.notify_all();
}

void TcpNode::loop() {
  for (;;) {
    Envelope env;
    {
      std::unique_lock lk(mu_);
      for (;;) {
        if (stopping_) return;
        auto now = Clock::now();
        // Due alarms before network input that arrived later.
        if (!alarms_.empty() && alarms_.top().due <= now) {
          env = alarms_.top().env;
          alarms_.pop();
          break;
        }
        if (!inbox_.empty()) {
          env = std::move(inbox_.front());
          inbox_.pop();
          break;
        }
        if (alarms_.empty())
          cv_.wait(lk);
        else
          cv_.wait_until(lk, alarms_.top().due);
      }
    }
    DispatchRecord rec = node_->dispatch(env);
    {
      std::lock_guard lk(mu_);
      metrics_ = node_->metrics();
    }
    if (observer_) observer_(rec);
  }
}

}  // namespace dahl
