function log(m) { console.log('[bg]', m); }
