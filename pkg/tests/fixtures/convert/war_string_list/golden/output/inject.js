window.postMessage({hello: 1}, '*');
