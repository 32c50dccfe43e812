// Generated service worker: loads the former background scripts in order.
importScripts(
  "main.js",
  "__generated_bg_inline_1.js"
);
