// Generated service worker: loads the former background scripts in order.
importScripts(
  "min.js"
);
