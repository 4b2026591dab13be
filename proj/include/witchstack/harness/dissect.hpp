#pragma once

#include <memory>
#include <string>
#include <vector>

#include "witchstack/aoverc/aoverc.hpp"
#include "witchstack/common/bytes.hpp"
#include "witchstack/harness/keylog.hpp"

namespace witchstack::harness {

// `children` partition `raw` in order. `decoded` holds layers that are not a
// byte range of this node (plaintext, reassembled stream units); each one is
// a tree of its own and offsets inside it restart at zero.
struct DissectNode {
  std::string label;
  std::string info;
  std::size_t offset = 0;
  Bytes raw;
  std::vector<DissectNode> children;
  std::vector<DissectNode> decoded;
};

struct DissectOptions {
  std::shared_ptr<KeyLog> keylog;
  // Recipient keyrings for health envelopes; every one is tried.
  std::vector<aoverc::Keyring> keyrings;
};

enum class TranscriptKind { Link, AlloyLines };

struct Dissection {
  TranscriptKind kind = TranscriptKind::Link;
  DissectNode root;
  bool truncated = false;
  std::size_t frames = 0;
  std::size_t decrypted = 0;
  std::size_t undecodable = 0;
};

// Never throws; malformed content becomes annotations in the tree.
Dissection dissect(ByteView transcript, const DissectOptions& opt = {});
// Throws FileUnreadable.
Dissection dissect_file(const std::string& path, const DissectOptions& opt = {});

// Concatenation of the leaves of `node` (decoded layers excluded).
Bytes reassemble(const DissectNode& node);
// Checks the partition property on `node`, its descendants and every decoded
// layer. On failure `where` names the first offending node.
bool tree_consistent(const DissectNode& node, std::string* where = nullptr);

std::string render_text(const Dissection& d);
std::string render_json(const Dissection& d);

}  // namespace witchstack::harness
